#include "exost/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace exost {

GraphKind parse_graph_kind(std::string_view tag) {
  if (tag == "pearson" || tag == "pearson-topk") return GraphKind::pearson_topk;
  if (tag == "adaptive") return GraphKind::adaptive;
  if (tag == "adaptive-directed") return GraphKind::adaptive_directed;
  if (tag == "identity") return GraphKind::identity;
  throw std::invalid_argument("unknown graph kind '" + std::string(tag) + "'");
}

std::string_view to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::pearson_topk: return "pearson";
    case GraphKind::adaptive: return "adaptive";
    case GraphKind::adaptive_directed: return "adaptive-directed";
    case GraphKind::identity: return "identity";
  }
  return "?";
}

Graph identity_graph(std::size_t nodes) {
  Graph g{DTensor({nodes, nodes}), GraphKind::identity};
  for (std::size_t i = 0; i < nodes; ++i) g.adjacency.values[i * nodes + i] = 1.0;
  return g;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Graph pearson_topk_adjacency(const std::vector<std::vector<double>>& series, std::size_t k) {
  const std::size_t n = series.size();
  if (k >= n) {
    throw std::invalid_argument("pearson top-k: k = " + std::to_string(k) +
                                " must be smaller than the node count " + std::to_string(n));
  }
  for (const auto& s : series) {
    if (s.size() < 2) throw std::invalid_argument("pearson top-k: need at least two steps");
    if (s.size() != series[0].size()) throw std::invalid_argument("pearson top-k: ragged series");
  }
  std::vector<double> rho(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rho[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r = pearson(series[i], series[j]);
      rho[i * n + j] = r;
      rho[j * n + i] = r;
    }
  }
  Graph g{DTensor({n, n}), GraphKind::pearson_topk};
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rho[i * n + a] > rho[i * n + b];
    });
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t j = order[r];
      g.adjacency.values[i * n + j] = rho[i * n + j];
    }
  }
  return g;
}

std::vector<std::vector<double>> target_series(const Panel& panel) {
  const std::size_t target = panel.target_index();
  std::vector<std::vector<double>> out(panel.num_nodes());
  for (std::size_t n = 0; n < panel.num_nodes(); ++n) {
    out[n].reserve(panel.num_steps());
    for (std::size_t t = 0; t < panel.num_steps(); ++t) out[n].push_back(panel.at(n, t, target));
  }
  return out;
}

DTensor with_self_loops_normalized(const DTensor& adjacency) {
  const std::size_t n = adjacency.shape.at(0);
  DTensor out(adjacency.shape, adjacency.values);
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i * n + i] += 1.0;
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm += std::fabs(out.values[i * n + j]);
    if (norm > 0.0) {
      for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] /= norm;
    }
  }
  return out;
}

ad::Var adaptive_adjacency(ad::Var embeddings) {
  return ad::softmax(ad::relu(ad::matmul(embeddings, embeddings, true)), -1);
}

ad::Var adaptive_adjacency_directed(ad::Var source, ad::Var target) {
  return ad::softmax(ad::relu(ad::matmul(source, target, true)), -1);
}

Graph adaptive_adjacency(const DTensor& embeddings) {
  ad::Tape tape;
  ad::Var a = adaptive_adjacency(tape.constant(embeddings));
  const auto v = a.value();
  return {DTensor(a.shape(), {v.begin(), v.end()}), GraphKind::adaptive};
}

Graph adaptive_adjacency_directed(const DTensor& source, const DTensor& target) {
  ad::Tape tape;
  ad::Var a = adaptive_adjacency_directed(tape.constant(source), tape.constant(target));
  const auto v = a.value();
  return {DTensor(a.shape(), {v.begin(), v.end()}), GraphKind::adaptive_directed};
}

}  // namespace exost
