#include "exost/backbone.hpp"

#include <stdexcept>
#include <vector>

namespace exost {

BackboneKind parse_backbone(std::string_view tag) {
  if (tag == "grugcn") return BackboneKind::grugcn;
  if (tag == "mlp-mixer") return BackboneKind::mlp_mixer;
  throw std::invalid_argument("unknown backbone '" + std::string(tag) + "'");
}

std::string_view to_string(BackboneKind kind) {
  return kind == BackboneKind::grugcn ? "grugcn" : "mlp-mixer";
}

namespace {

void add_param(ParamStore& params, const std::string& name, Shape shape, std::size_t fan_in,
               std::mt19937_64& rng) {
  DTensor t(std::move(shape));
  init_uniform(t, fan_in, rng);
  params[name] = std::move(t);
}

}  // namespace

void init_backbone(ParamStore& params, const std::string& prefix, const BackboneSpec& spec,
                   std::mt19937_64& rng) {
  const std::size_t h = spec.hidden;
  if (spec.kind == BackboneKind::grugcn) {
    add_param(params, prefix + ".spatial", {h, h}, h, rng);
    for (const char* gate : {"update", "reset", "cand"}) {
      add_param(params, prefix + ".w_" + gate, {h, 2 * h}, 2 * h, rng);
      add_param(params, prefix + ".b_" + gate, {h}, 2 * h, rng);
    }
  } else {
    add_param(params, prefix + ".w_feature", {h, h}, h, rng);
    add_param(params, prefix + ".b_feature", {h}, h, rng);
    add_param(params, prefix + ".w_time", {spec.steps, spec.steps}, spec.steps, rng);
    add_param(params, prefix + ".b_time", {spec.steps}, spec.steps, rng);
  }
}

void init_readout(ParamStore& params, const std::string& prefix, std::size_t steps,
                  std::size_t hidden, std::size_t steps_out, std::mt19937_64& rng) {
  add_param(params, prefix + ".readout.w", {steps_out, steps * hidden}, steps * hidden, rng);
  add_param(params, prefix + ".readout.b", {steps_out}, steps * hidden, rng);
}

GruGcnWeights bind_grugcn(ParamBinder& bind, const std::string& prefix) {
  return {bind(prefix + ".spatial"), bind(prefix + ".w_update"), bind(prefix + ".b_update"),
          bind(prefix + ".w_reset"), bind(prefix + ".b_reset"),   bind(prefix + ".w_cand"),
          bind(prefix + ".b_cand")};
}

MixerWeights bind_mixer(ParamBinder& bind, const std::string& prefix) {
  return {bind(prefix + ".w_feature"), bind(prefix + ".b_feature"), bind(prefix + ".w_time"),
          bind(prefix + ".b_time")};
}

ReadoutWeights bind_readout(ParamBinder& bind, const std::string& prefix) {
  return {bind(prefix + ".readout.w"), bind(prefix + ".readout.b")};
}

ad::Var grugcn_step(ad::Var h, ad::Var x_t, ad::Var adjacency, const GruGcnWeights& w) {
  ad::Var s = ad::matmul(ad::matmul(adjacency, x_t), w.spatial);
  ad::Var sh = ad::concat({s, h}, -1);
  ad::Var z = ad::sigmoid(ad::linear(sh, w.w_update, w.b_update));
  ad::Var r = ad::sigmoid(ad::linear(sh, w.w_reset, w.b_reset));
  ad::Var c = ad::tanh(ad::linear(ad::concat({s, ad::mul(r, h)}, -1), w.w_cand, w.b_cand));
  // h' = z⊙h + (1 − z)⊙c
  ad::Var keep_old = ad::mul(z, h);
  ad::Var take_new = ad::mul(ad::add_scalar(ad::scale(z, -1.0), 1.0), c);
  return ad::add(keep_old, take_new);
}

ad::Var grugcn_encode(ad::Var x, ad::Var adjacency, const GruGcnWeights& w) {
  const Shape xs = x.shape();
  if (xs.size() < 3) throw ShapeError("grugcn: input must be [..., N, T, H]");
  const std::size_t steps = xs[xs.size() - 2];
  const std::size_t hidden = w.spatial.dim(0);
  if (xs.back() != hidden) {
    throw ShapeError("grugcn: input width " + std::to_string(xs.back()) +
                     " does not match hidden size " + std::to_string(hidden));
  }
  Shape state_shape(xs.begin(), xs.end() - 2);
  state_shape.push_back(hidden);  // [..., N, H]
  Shape step_shape = state_shape;
  step_shape.insert(step_shape.end() - 1, 1);  // [..., N, 1, H]

  ad::Var h = x.tape().fill(state_shape, 0.0);
  std::vector<ad::Var> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    ad::Var x_t = ad::reshape(ad::slice(x, -2, t, 1), state_shape);
    h = grugcn_step(h, x_t, adjacency, w);
    states.push_back(ad::reshape(h, step_shape));
  }
  return ad::concat(states, -2);
}

ad::Var mlp_mixer_encode(ad::Var x, const MixerWeights& w) {
  ad::Var z = ad::relu(ad::linear(x, w.w_feature, w.b_feature));
  ad::Var mixed = ad::matmul(w.w_time, z);
  const std::size_t steps = w.b_time.dim(0);
  ad::Var bias = ad::broadcast_to(ad::reshape(w.b_time, {steps, 1}), mixed.shape());
  return ad::relu(ad::add(mixed, bias));
}

ad::Var backbone_readout(ad::Var hidden, const ReadoutWeights& w) {
  const Shape hs = hidden.shape();
  Shape flat(hs.begin(), hs.end() - 2);
  flat.push_back(hs[hs.size() - 2] * hs.back());
  ad::Var y = ad::linear(ad::reshape(hidden, flat), w.weight, w.bias);
  Shape out(hs.begin(), hs.end() - 2);
  out.push_back(w.weight.dim(0));
  out.push_back(1);
  return ad::reshape(y, out);
}

ad::Var backbone_encode(ad::Var x, ad::Var adjacency, ParamBinder& bind,
                        const std::string& prefix, const BackboneSpec& spec) {
  if (spec.kind == BackboneKind::grugcn) {
    if (!adjacency.valid()) throw std::invalid_argument("grugcn backbone requires a graph");
    return grugcn_encode(x, adjacency, bind_grugcn(bind, prefix));
  }
  return mlp_mixer_encode(x, bind_mixer(bind, prefix));
}

ad::Var backbone_forward(ad::Var x, ad::Var adjacency, ParamBinder& bind,
                         const std::string& prefix, const BackboneSpec& spec) {
  return backbone_readout(backbone_encode(x, adjacency, bind, prefix, spec),
                          bind_readout(bind, prefix));
}

}  // namespace exost
