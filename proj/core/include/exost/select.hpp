#pragma once

// The selection stage: conditional embedding of the target history into an
// exogenous-conditioned latent space, then a dense mixture-of-experts gate
// that re-weights K expert projections at every node and step.
//
// Tensors carry any number of leading axes; time is axis -2 and features are
// the last axis. Weights are stored out × in.

#include <string_view>

#include "exost/params.hpp"
#include "exost/tensor.hpp"

namespace exost {

enum class Activation { relu, identity, tanh, leaky_relu };

Activation parse_activation(std::string_view tag);
std::string_view to_string(Activation act);
ad::Var activate(ad::Var x, Activation act);

/// Where zero padding goes when the two inputs of an embedding disagree in
/// length: history-aligned streams pad the head, horizon-aligned the tail.
enum class PadSide { head, tail };

/// Zero-pads `x` along axis -2 to `steps`.
ad::Var pad_time(ad::Var x, std::size_t steps, PadSide side);

struct CondEmbedWeights {
  ad::Var wx;  // H × F
  ad::Var we;  // H × F_τ; unbound when the exogenous block is empty
  ad::Var b;   // H
};

struct CondEmbedOptions {
  Activation activation = Activation::relu;
  double keep_prob = 0.9;
  PadSide pad = PadSide::head;
};

/// Dropout(Act(W_x·x + W_e·e + b)) per node and step.
ad::Var conditional_embed(ad::Var x, ad::Var e, const CondEmbedWeights& w,
                          const CondEmbedOptions& options, const ForwardContext& ctx);

/// softmax_K(W_g·x): [..., H] → [..., K].
ad::Var moe_gate(ad::Var x, ad::Var gate_weights);

/// Σ_k g_k·(W_k·x) with experts stored as K × H × H.
ad::Var moe_select(ad::Var x, ad::Var experts, ad::Var gate);

}  // namespace exost
