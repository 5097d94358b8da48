#pragma once

// Spatio-temporal encoders for the siamese branches. Every encoder turns a
// [..., N, T, H] representation into a hidden sequence of the same shape;
// a shared linear read-out over the flattened sequence then produces the
// [..., N, T_f, 1] branch forecast.

#include <string>
#include <string_view>

#include "exost/params.hpp"
#include "exost/tensor.hpp"

namespace exost {

enum class BackboneKind { grugcn, mlp_mixer };

BackboneKind parse_backbone(std::string_view tag);
std::string_view to_string(BackboneKind kind);

struct BackboneSpec {
  BackboneKind kind = BackboneKind::grugcn;
  std::size_t hidden = 64;
  std::size_t steps = 24;      // length of the encoded sequence
  std::size_t steps_out = 24;  // forecast horizon

  bool needs_graph() const { return kind == BackboneKind::grugcn; }
};

struct GruGcnWeights {
  ad::Var spatial;  // H × H, right-multiplied: A·x·W_s
  ad::Var w_update, b_update;  // H × 2H, H
  ad::Var w_reset, b_reset;
  ad::Var w_cand, b_cand;
};

struct MixerWeights {
  ad::Var w_feature, b_feature;  // H × H, H
  ad::Var w_time, b_time;        // T × T, T
};

struct ReadoutWeights {
  ad::Var weight;  // T_f × (T·H)
  ad::Var bias;    // T_f
};

/// Creates the encoder parameters for `spec` under `prefix` (e.g. "backbone.p").
void init_backbone(ParamStore& params, const std::string& prefix, const BackboneSpec& spec,
                   std::mt19937_64& rng);
void init_readout(ParamStore& params, const std::string& prefix, std::size_t steps,
                  std::size_t hidden, std::size_t steps_out, std::mt19937_64& rng);

GruGcnWeights bind_grugcn(ParamBinder& bind, const std::string& prefix);
MixerWeights bind_mixer(ParamBinder& bind, const std::string& prefix);
ReadoutWeights bind_readout(ParamBinder& bind, const std::string& prefix);

/// One recurrent step on [..., N, H] states:
///   s = A·x·W_s;  z = σ(W_z[s,h] + b_z);  r = σ(W_r[s,h] + b_r)
///   c = tanh(W_c[s, r⊙h] + b_c);  h' = z⊙h + (1 − z)⊙c
ad::Var grugcn_step(ad::Var h, ad::Var x_t, ad::Var adjacency, const GruGcnWeights& w);

/// Runs the recurrence over axis -2 from a zero state; returns every state.
ad::Var grugcn_encode(ad::Var x, ad::Var adjacency, const GruGcnWeights& w);

/// Feature mixing then time mixing, each linear + ReLU, no spatial mixing.
ad::Var mlp_mixer_encode(ad::Var x, const MixerWeights& w);

/// Linear map of the flattened hidden sequence to the horizon: [..., N, T_f, 1].
ad::Var backbone_readout(ad::Var hidden, const ReadoutWeights& w);

/// Encode with the kind-specific encoder. `adjacency` may be unbound for
/// graph-free kinds; a graph-requiring kind throws std::invalid_argument.
ad::Var backbone_encode(ad::Var x, ad::Var adjacency, ParamBinder& bind,
                        const std::string& prefix, const BackboneSpec& spec);

/// Encoder followed by read-out.
ad::Var backbone_forward(ad::Var x, ad::Var adjacency, ParamBinder& bind,
                         const std::string& prefix, const BackboneSpec& spec);

}  // namespace exost
