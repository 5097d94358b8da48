#pragma once

// The balancing stage: ways of combining the past-conditioned and
// future-conditioned branch forecasts. Branch tensors are [..., N, T_f, 1];
// attention fusion works on [..., N, T, H] hidden sequences instead.

#include <string_view>

#include "exost/tensor.hpp"

namespace exost {

enum class FusionStrategy { context, shared, simple, learnable, attention };

FusionStrategy parse_fusion(std::string_view tag);
std::string_view to_string(FusionStrategy strategy);

/// Granularity of the balancing weight: one per horizon step, broadcast over
/// nodes, or a single scalar per sample.
enum class AlphaMode { per_step, per_sample };

AlphaMode parse_alpha_mode(std::string_view tag);
std::string_view to_string(AlphaMode mode);

struct BalancerWeights {
  ad::Var w1, b1;  // width × T_f, width
  ad::Var w2, b2;  // T_f × width (or 1 × width), T_f (or 1)
};

/// Bottleneck width for horizon `steps_out` and reduction ratio `r`.
std::size_t balancer_width(std::size_t steps_out, std::size_t reduction);

struct Balanced {
  ad::Var y_hat;
  ad::Var alpha;  // [..., T_f] or [..., 1]
};

/// Y = Y_p + Y_f;  α = σ(W₂·ReLU(W₁·mean_N(Y) + b₁) + b₂);
/// Ŷ = α⊙Y_p + (1 − α)⊙Y_f + Y, with α broadcast over nodes.
Balanced context_balance(ad::Var y_past, ad::Var y_future, const BalancerWeights& w);

/// α⊙Y_p + (1 − α)⊙Y_f + (Y_p + Y_f) for a given α already shaped like the branches.
ad::Var balance_with_alpha(ad::Var y_past, ad::Var y_future, ad::Var alpha);

/// ½·Y_p + ½·Y_f.
ad::Var fuse_simple(ad::Var y_past, ad::Var y_future);

/// (w₀, w₁) = softmax(w_init);  Ŷ = w₀·Y_p + w₁·Y_f + (Y_p + Y_f).
ad::Var fuse_learnable(ad::Var y_past, ad::Var y_future, ad::Var w_init);

struct AttentionWeights {
  ad::Var wq, wk, wv;  // H × H, right-multiplied
};

struct Enhanced {
  ad::Var past, future;
};

/// Bidirectional per-step cross attention between hidden sequences: scores
/// Σ_h Q·K / √H, softmax over time, enhanced = state + α⊙V.
Enhanced cross_attend(ad::Var h_past, ad::Var h_future, const AttentionWeights& w);

/// ½·enhanced_past + ½·enhanced_future.
ad::Var fuse_attention(ad::Var h_past, ad::Var h_future, const AttentionWeights& w);

}  // namespace exost
