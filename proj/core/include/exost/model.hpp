#pragma once

// The full forecaster: conditional embedding and expert selection per
// exogenous branch, siamese spatio-temporal encoders, then fusion.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "exost/backbone.hpp"
#include "exost/fusion.hpp"
#include "exost/graph.hpp"
#include "exost/params.hpp"
#include "exost/select.hpp"

namespace exost {

struct ModelConfig {
  std::size_t nodes = 1;
  std::size_t target_features = 1;
  std::size_t past_features = 0;    // width of the past exogenous block
  std::size_t future_features = 0;  // width of the future exogenous block
  std::size_t steps_in = 24;
  std::size_t steps_out = 24;
  std::size_t hidden = 64;
  std::size_t experts = 4;
  Activation activation = Activation::relu;
  double dropout = 0.1;
  BackboneKind backbone = BackboneKind::grugcn;
  GraphKind graph = GraphKind::pearson_topk;
  std::size_t graph_topk = kDefaultTopK;
  std::size_t embed_dim = 8;
  FusionStrategy fusion = FusionStrategy::context;
  AlphaMode alpha = AlphaMode::per_step;
  std::size_t balancer_reduction = 4;
  bool use_selector = true;
  bool use_balancer = true;

  /// Length of the encoded sequence once both inputs are aligned.
  std::size_t encoded_steps() const { return std::max(steps_in, steps_out); }
  BackboneSpec backbone_spec() const {
    return {backbone, hidden, encoded_steps(), steps_out};
  }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

class Model {
 public:
  /// Creates and initializes every parameter the configuration needs.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Fixed adjacency for pearson/identity graphs (not trained).
  void set_adjacency(DTensor adjacency);
  const DTensor& adjacency() const { return adjacency_; }

  /// Prefix of the encoder parameters used by branch `past` or future.
  std::string backbone_prefix(bool past) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  DTensor adjacency_;
};

struct ForwardResult {
  ad::Var y_hat;     // [..., N, T_f, 1]
  ad::Var alpha;     // bound only for the context balancer
  ad::Var y_past;    // branch forecasts, when the strategy produces them
  ad::Var y_future;
};

/// Runs the whole pipeline on [..., N, T, F] inputs. Parameters are bound
/// through `bind`, so a mutable store gives a differentiable pass.
ForwardResult exost_forward(ParamBinder& bind, const Model& model, ad::Var x, ad::Var e_past,
                            ad::Var e_future, const ForwardContext& ctx);

}  // namespace exost
