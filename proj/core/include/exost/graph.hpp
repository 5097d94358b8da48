#pragma once

// Node adjacency construction: Pearson top-k graphs from target histories and
// adaptive graphs from trainable node embeddings.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "exost/data.hpp"
#include "exost/tensor.hpp"

namespace exost {

enum class GraphKind { pearson_topk, adaptive, adaptive_directed, identity };

GraphKind parse_graph_kind(std::string_view tag);
std::string_view to_string(GraphKind kind);

struct Graph {
  DTensor adjacency;  // N × N
  GraphKind provenance = GraphKind::identity;

  std::size_t nodes() const { return adjacency.shape.empty() ? 0 : adjacency.shape[0]; }
};

inline constexpr std::size_t kDefaultTopK = 8;

Graph identity_graph(std::size_t nodes);

/// Pearson correlation of two equal-length series; 0 when either is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// A_ij = ρ_ij for the k largest off-diagonal ρ in row i, 0 elsewhere. Ties
/// go to the lower node index. Throws std::invalid_argument when k >= N or
/// the series are shorter than two steps.
Graph pearson_topk_adjacency(const std::vector<std::vector<double>>& series, std::size_t k);

/// Target history of every node in `panel`.
std::vector<std::vector<double>> target_series(const Panel& panel);

/// Adds self-loops and divides every row by its absolute sum, so signed
/// Pearson rows stay bounded.
DTensor with_self_loops_normalized(const DTensor& adjacency);

/// Row-softmax(ReLU(E·Eᵀ)), recorded on the tape.
ad::Var adaptive_adjacency(ad::Var embeddings);
/// Row-softmax(ReLU(E_s·E_tᵀ)), recorded on the tape.
ad::Var adaptive_adjacency_directed(ad::Var source, ad::Var target);

/// Value-only evaluations for inspection.
Graph adaptive_adjacency(const DTensor& embeddings);
Graph adaptive_adjacency_directed(const DTensor& source, const DTensor& target);

}  // namespace exost
