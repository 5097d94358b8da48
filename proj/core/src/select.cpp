#include "exost/select.hpp"

#include <stdexcept>
#include <string>

namespace exost {

Activation parse_activation(std::string_view tag) {
  if (tag == "relu") return Activation::relu;
  if (tag == "identity") return Activation::identity;
  if (tag == "tanh") return Activation::tanh;
  if (tag == "leaky-relu") return Activation::leaky_relu;
  throw std::invalid_argument("unknown activation '" + std::string(tag) + "'");
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::leaky_relu: return "leaky-relu";
  }
  return "?";
}

ad::Var activate(ad::Var x, Activation act) {
  switch (act) {
    case Activation::relu: return ad::relu(x);
    case Activation::identity: return x;
    case Activation::tanh: return ad::tanh(x);
    case Activation::leaky_relu: return ad::leaky_relu(x);
  }
  return x;
}

ad::Var pad_time(ad::Var x, std::size_t steps, PadSide side) {
  const std::size_t have = x.dim(-2);
  if (have == steps) return x;
  if (have > steps) throw ShapeError("pad_time: input is longer than the target length");
  Shape zeros_shape = x.shape();
  zeros_shape[zeros_shape.size() - 2] = steps - have;
  ad::Var zeros = x.tape().fill(zeros_shape, 0.0);
  return side == PadSide::head ? ad::concat({zeros, x}, -2) : ad::concat({x, zeros}, -2);
}

ad::Var conditional_embed(ad::Var x, ad::Var e, const CondEmbedWeights& w,
                          const CondEmbedOptions& options, const ForwardContext& ctx) {
  if (x.dim(-1) != w.wx.dim(-1)) {
    throw ShapeError("conditional_embed: endogenous width " + std::to_string(x.dim(-1)) +
                     " does not match W_x " + to_string(w.wx.shape()));
  }
  ad::Var pre;
  if (e.valid() && e.dim(-1) > 0) {
    if (!w.we.valid() || e.dim(-1) != w.we.dim(-1)) {
      throw ShapeError("conditional_embed: exogenous width " + std::to_string(e.dim(-1)) +
                       " does not match W_e");
    }
    const std::size_t steps = std::max(x.dim(-2), e.dim(-2));
    x = pad_time(x, steps, options.pad);
    e = pad_time(e, steps, options.pad);
    pre = ad::add(ad::linear(x, w.wx), ad::linear(e, w.we));
  } else {
    pre = ad::linear(x, w.wx);
  }
  pre = ad::add(pre, ad::broadcast_to(w.b, pre.shape()));
  ad::Var out = activate(pre, options.activation);
  if (ctx.train && options.keep_prob < 1.0) {
    if (!ctx.rng) throw std::logic_error("conditional_embed: training dropout needs an rng");
    out = ad::dropout(out, options.keep_prob, true, *ctx.rng);
  }
  return out;
}

ad::Var moe_gate(ad::Var x, ad::Var gate_weights) {
  return ad::softmax(ad::linear(x, gate_weights), -1);
}

ad::Var moe_select(ad::Var x, ad::Var experts, ad::Var gate) {
  const Shape es = experts.shape();
  if (es.size() != 3 || es[1] != es[2]) {
    throw ShapeError("moe_select: experts must be K x H x H, got " + to_string(es));
  }
  const std::size_t k = es[0];
  const std::size_t h = es[1];
  if (x.dim(-1) != h || gate.dim(-1) != k) {
    throw ShapeError("moe_select: input " + to_string(x.shape()) + " / gate " +
                     to_string(gate.shape()) + " do not match experts " + to_string(es));
  }
  // One product for all experts: [..., K·H] viewed as [..., K, H].
  ad::Var stacked = ad::linear(x, ad::reshape(experts, {k * h, h}));
  Shape split = x.shape();
  split.back() = k;
  split.push_back(h);
  stacked = ad::reshape(stacked, split);
  Shape gate_shape = gate.shape();
  gate_shape.push_back(1);
  ad::Var weights = ad::broadcast_to(ad::reshape(gate, gate_shape), split);
  return ad::sum(ad::mul(stacked, weights), -2);
}

}  // namespace exost
