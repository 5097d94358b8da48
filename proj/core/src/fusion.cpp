#include "exost/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace exost {

FusionStrategy parse_fusion(std::string_view tag) {
  if (tag == "context") return FusionStrategy::context;
  if (tag == "shared") return FusionStrategy::shared;
  if (tag == "simple") return FusionStrategy::simple;
  if (tag == "learnable") return FusionStrategy::learnable;
  if (tag == "attention") return FusionStrategy::attention;
  throw std::invalid_argument("unknown fusion strategy '" + std::string(tag) + "'");
}

std::string_view to_string(FusionStrategy strategy) {
  switch (strategy) {
    case FusionStrategy::context: return "context";
    case FusionStrategy::shared: return "shared";
    case FusionStrategy::simple: return "simple";
    case FusionStrategy::learnable: return "learnable";
    case FusionStrategy::attention: return "attention";
  }
  return "?";
}

AlphaMode parse_alpha_mode(std::string_view tag) {
  if (tag == "per-step") return AlphaMode::per_step;
  if (tag == "per-sample") return AlphaMode::per_sample;
  throw std::invalid_argument("unknown alpha mode '" + std::string(tag) + "'");
}

std::string_view to_string(AlphaMode mode) {
  return mode == AlphaMode::per_step ? "per-step" : "per-sample";
}

std::size_t balancer_width(std::size_t steps_out, std::size_t reduction) {
  return std::max<std::size_t>(4, steps_out / std::max<std::size_t>(reduction, 1));
}

namespace {

void require_branch_pair(const char* op, ad::Var a, ad::Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": branch shapes differ " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  }
}

}  // namespace

ad::Var balance_with_alpha(ad::Var y_past, ad::Var y_future, ad::Var alpha) {
  require_branch_pair("balance", y_past, y_future);
  ad::Var context = ad::add(y_past, y_future);
  ad::Var one_minus = ad::add_scalar(ad::scale(alpha, -1.0), 1.0);
  return ad::add(ad::add(ad::mul(alpha, y_past), ad::mul(one_minus, y_future)), context);
}

Balanced context_balance(ad::Var y_past, ad::Var y_future, const BalancerWeights& w) {
  require_branch_pair("context_balance", y_past, y_future);
  const Shape ys = y_past.shape();
  if (ys.size() < 3 || ys.back() != 1) {
    throw ShapeError("context_balance: branches must be [..., N, T_f, 1], got " + to_string(ys));
  }
  const std::size_t steps = ys[ys.size() - 2];
  ad::Var context = ad::add(y_past, y_future);
  // Average over nodes: [..., T_f, 1] → [..., T_f].
  ad::Var pooled = ad::mean(context, -3);
  Shape desc_shape(ys.begin(), ys.end() - 3);
  desc_shape.push_back(steps);
  ad::Var descriptor = ad::reshape(pooled, desc_shape);
  ad::Var hidden = ad::relu(ad::linear(descriptor, w.w1, w.b1));
  ad::Var alpha = ad::sigmoid(ad::linear(hidden, w.w2, w.b2));

  Shape alpha_shape(ys.begin(), ys.end() - 3);
  alpha_shape.push_back(1);
  alpha_shape.push_back(alpha.dim(-1));
  alpha_shape.push_back(1);
  ad::Var alpha_b = ad::broadcast_to(ad::reshape(alpha, alpha_shape), ys);
  return {balance_with_alpha(y_past, y_future, alpha_b), alpha};
}

ad::Var fuse_simple(ad::Var y_past, ad::Var y_future) {
  require_branch_pair("fuse_simple", y_past, y_future);
  return ad::add(ad::scale(y_past, 0.5), ad::scale(y_future, 0.5));
}

ad::Var fuse_learnable(ad::Var y_past, ad::Var y_future, ad::Var w_init) {
  require_branch_pair("fuse_learnable", y_past, y_future);
  if (w_init.shape() != Shape{2}) throw ShapeError("fuse_learnable: w_init must have shape (2)");
  ad::Var w = ad::softmax(w_init, 0);
  const Shape ys = y_past.shape();
  ad::Var w0 = ad::broadcast_to(ad::slice(w, 0, 0, 1), ys);
  ad::Var w1 = ad::broadcast_to(ad::slice(w, 0, 1, 1), ys);
  ad::Var weighted = ad::add(ad::mul(w0, y_past), ad::mul(w1, y_future));
  return ad::add(weighted, ad::add(y_past, y_future));
}

namespace {

// source ← source + softmax_t(Σ_h Q·K / √H) ⊙ V, with Q from `query_side`.
ad::Var attend(ad::Var query_side, ad::Var key_side, const AttentionWeights& w) {
  const std::size_t h = key_side.dim(-1);
  ad::Var q = ad::matmul(query_side, w.wq);
  ad::Var k = ad::matmul(key_side, w.wk);
  ad::Var v = ad::matmul(key_side, w.wv);
  ad::Var scores = ad::scale(ad::sum(ad::mul(q, k), -1), 1.0 / std::sqrt(static_cast<double>(h)));
  ad::Var alpha = ad::softmax(scores, -1);
  Shape as = alpha.shape();
  as.push_back(1);
  ad::Var weighted = ad::mul(ad::broadcast_to(ad::reshape(alpha, as), v.shape()), v);
  return ad::add(key_side, weighted);
}

}  // namespace

Enhanced cross_attend(ad::Var h_past, ad::Var h_future, const AttentionWeights& w) {
  require_branch_pair("cross_attend", h_past, h_future);
  // Future → past: queries from the future branch enhance the past states.
  ad::Var past = attend(h_future, h_past, w);
  // Past → future.
  ad::Var future = attend(h_past, h_future, w);
  return {past, future};
}

ad::Var fuse_attention(ad::Var h_past, ad::Var h_future, const AttentionWeights& w) {
  Enhanced e = cross_attend(h_past, h_future, w);
  return ad::add(ad::scale(e.past, 0.5), ad::scale(e.future, 0.5));
}

}  // namespace exost
