#include "exost/model.hpp"

#include <stdexcept>

namespace exost {

void ModelConfig::validate() const {
  if (nodes == 0 || hidden == 0 || experts == 0 || steps_in == 0 || steps_out == 0) {
    throw std::invalid_argument("model: nodes, hidden, experts and step counts must be positive");
  }
  if (target_features == 0) throw std::invalid_argument("model: target width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("model: dropout rate must lie in [0, 1)");
  }
  if ((graph == GraphKind::adaptive || graph == GraphKind::adaptive_directed) && embed_dim == 0) {
    throw std::invalid_argument("model: adaptive graphs need embed_dim >= 1");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"nodes", c.nodes},
      {"target_features", c.target_features},
      {"past_features", c.past_features},
      {"future_features", c.future_features},
      {"steps_in", c.steps_in},
      {"steps_out", c.steps_out},
      {"hidden", c.hidden},
      {"experts", c.experts},
      {"activation", std::string(to_string(c.activation))},
      {"dropout", c.dropout},
      {"backbone", std::string(to_string(c.backbone))},
      {"graph", std::string(to_string(c.graph))},
      {"graph_topk", c.graph_topk},
      {"embed_dim", c.embed_dim},
      {"fusion", std::string(to_string(c.fusion))},
      {"alpha", std::string(to_string(c.alpha))},
      {"balancer_reduction", c.balancer_reduction},
      {"use_selector", c.use_selector},
      {"use_balancer", c.use_balancer},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.nodes = j.at("nodes").get<std::size_t>();
  c.target_features = j.at("target_features").get<std::size_t>();
  c.past_features = j.at("past_features").get<std::size_t>();
  c.future_features = j.at("future_features").get<std::size_t>();
  c.steps_in = j.at("steps_in").get<std::size_t>();
  c.steps_out = j.at("steps_out").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.experts = j.at("experts").get<std::size_t>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  c.graph = parse_graph_kind(j.at("graph").get<std::string>());
  c.graph_topk = j.at("graph_topk").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  c.alpha = parse_alpha_mode(j.at("alpha").get<std::string>());
  c.balancer_reduction = j.at("balancer_reduction").get<std::size_t>();
  c.use_selector = j.at("use_selector").get<bool>();
  c.use_balancer = j.at("use_balancer").get<bool>();
  return c;
}

namespace {

void add_param(ParamStore& params, const std::string& name, Shape shape, std::size_t fan_in,
               std::mt19937_64& rng) {
  DTensor t(std::move(shape));
  init_uniform(t, fan_in, rng);
  params[name] = std::move(t);
}

bool separate_readouts(const ModelConfig& c) {
  return c.fusion != FusionStrategy::attention || !c.use_balancer;
}

}  // namespace

std::string Model::backbone_prefix(bool past) const {
  if (config_.fusion == FusionStrategy::shared && config_.use_balancer) return "backbone.shared";
  return past ? "backbone.p" : "backbone.f";
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t h = config_.hidden;
  const std::size_t k = config_.experts;
  const std::size_t fx = config_.target_features;

  for (const char* branch : {"p", "f"}) {
    const std::string pre = std::string("select.") + branch;
    const std::size_t fe = branch[0] == 'p' ? config_.past_features : config_.future_features;
    add_param(params_, pre + ".wx", {h, fx}, fx + fe, rng);
    if (fe > 0) add_param(params_, pre + ".we", {h, fe}, fx + fe, rng);
    add_param(params_, pre + ".b", {h}, fx + fe, rng);
    if (config_.use_selector) {
      add_param(params_, pre + ".gate", {k, h}, h, rng);
      add_param(params_, pre + ".experts", {k, h, h}, h, rng);
    }
  }

  const std::size_t n = config_.nodes;
  switch (config_.graph) {
    case GraphKind::adaptive:
      add_param(params_, "graph.embed", {n, config_.embed_dim}, config_.embed_dim, rng);
      break;
    case GraphKind::adaptive_directed:
      add_param(params_, "graph.source", {n, config_.embed_dim}, config_.embed_dim, rng);
      add_param(params_, "graph.target", {n, config_.embed_dim}, config_.embed_dim, rng);
      break;
    case GraphKind::identity:
    case GraphKind::pearson_topk:
      adjacency_ = identity_graph(n).adjacency;
      break;
  }

  const BackboneSpec spec = config_.backbone_spec();
  const std::size_t steps = spec.steps;
  const bool shared = config_.fusion == FusionStrategy::shared && config_.use_balancer;
  for (const std::string& pre : shared ? std::vector<std::string>{"backbone.shared"}
                                       : std::vector<std::string>{"backbone.p", "backbone.f"}) {
    init_backbone(params_, pre, spec, rng);
    if (separate_readouts(config_)) init_readout(params_, pre, steps, h, config_.steps_out, rng);
  }

  if (!config_.use_balancer) return;
  switch (config_.fusion) {
    case FusionStrategy::context: {
      const std::size_t width = balancer_width(config_.steps_out, config_.balancer_reduction);
      const std::size_t out = config_.alpha == AlphaMode::per_step ? config_.steps_out : 1;
      add_param(params_, "balance.w1", {width, config_.steps_out}, config_.steps_out, rng);
      add_param(params_, "balance.b1", {width}, config_.steps_out, rng);
      add_param(params_, "balance.w2", {out, width}, width, rng);
      add_param(params_, "balance.b2", {out}, width, rng);
      break;
    }
    case FusionStrategy::learnable:
      params_["fusion.w_init"] = DTensor({2}, 0.0);
      break;
    case FusionStrategy::attention:
      add_param(params_, "fusion.wq", {h, h}, h, rng);
      add_param(params_, "fusion.wk", {h, h}, h, rng);
      add_param(params_, "fusion.wv", {h, h}, h, rng);
      init_readout(params_, "fusion", steps, h, config_.steps_out, rng);
      break;
    case FusionStrategy::shared:
    case FusionStrategy::simple:
      break;
  }
}

void Model::set_adjacency(DTensor adjacency) {
  if (adjacency.shape != Shape{config_.nodes, config_.nodes}) {
    throw ShapeError("adjacency must be N x N for N = " + std::to_string(config_.nodes));
  }
  adjacency.grad.assign(adjacency.values.size(), 0.0);
  adjacency_ = std::move(adjacency);
}

namespace {

ad::Var branch_select(ParamBinder& bind, const ModelConfig& c, const char* branch, ad::Var x,
                      ad::Var e, PadSide pad, const ForwardContext& ctx) {
  const std::string pre = std::string("select.") + branch;
  CondEmbedWeights w;
  w.wx = bind(pre + ".wx");
  if (bind.contains(pre + ".we")) w.we = bind(pre + ".we");
  w.b = bind(pre + ".b");
  CondEmbedOptions opt{c.activation, 1.0 - c.dropout, pad};
  ad::Var embedded = conditional_embed(x, w.we.valid() ? e : ad::Var{}, w, opt, ctx);
  if (!c.use_selector) return embedded;
  ad::Var gate = moe_gate(embedded, bind(pre + ".gate"));
  return moe_select(embedded, bind(pre + ".experts"), gate);
}

ad::Var bind_adjacency(ParamBinder& bind, const Model& model) {
  switch (model.config().graph) {
    case GraphKind::adaptive:
      return adaptive_adjacency(bind("graph.embed"));
    case GraphKind::adaptive_directed:
      return adaptive_adjacency_directed(bind("graph.source"), bind("graph.target"));
    case GraphKind::identity:
    case GraphKind::pearson_topk:
      return bind.tape().constant(model.adjacency());
  }
  return {};
}

}  // namespace

ForwardResult exost_forward(ParamBinder& bind, const Model& model, ad::Var x, ad::Var e_past,
                            ad::Var e_future, const ForwardContext& ctx) {
  const ModelConfig& c = model.config();
  const BackboneSpec spec = c.backbone_spec();
  if (x.dim(-3) != c.nodes) {
    throw ShapeError("forward: input has " + std::to_string(x.dim(-3)) + " nodes, model expects " +
                     std::to_string(c.nodes));
  }

  ad::Var xp = branch_select(bind, c, "p", x, e_past, PadSide::head, ctx);
  ad::Var xf = branch_select(bind, c, "f", x, e_future, PadSide::tail, ctx);
  // Both branches must share one sequence length for the siamese encoders.
  xp = pad_time(xp, spec.steps, PadSide::head);
  xf = pad_time(xf, spec.steps, PadSide::tail);

  ad::Var adjacency = spec.needs_graph() ? bind_adjacency(bind, model) : ad::Var{};
  const std::string pre_p = model.backbone_prefix(true);
  const std::string pre_f = model.backbone_prefix(false);
  ad::Var hp = backbone_encode(xp, adjacency, bind, pre_p, spec);
  ad::Var hf = backbone_encode(xf, adjacency, bind, pre_f, spec);

  ForwardResult out;
  if (c.use_balancer && c.fusion == FusionStrategy::attention) {
    AttentionWeights aw{bind("fusion.wq"), bind("fusion.wk"), bind("fusion.wv")};
    out.y_hat = backbone_readout(fuse_attention(hp, hf, aw), bind_readout(bind, "fusion"));
    return out;
  }
  out.y_past = backbone_readout(hp, bind_readout(bind, pre_p));
  out.y_future = backbone_readout(hf, bind_readout(bind, pre_f));
  if (!c.use_balancer) {
    out.y_hat = ad::add(out.y_past, out.y_future);
    return out;
  }
  switch (c.fusion) {
    case FusionStrategy::context: {
      BalancerWeights bw{bind("balance.w1"), bind("balance.b1"), bind("balance.w2"),
                         bind("balance.b2")};
      Balanced b = context_balance(out.y_past, out.y_future, bw);
      out.y_hat = b.y_hat;
      out.alpha = b.alpha;
      break;
    }
    case FusionStrategy::shared:
    case FusionStrategy::simple:
      out.y_hat = fuse_simple(out.y_past, out.y_future);
      break;
    case FusionStrategy::learnable:
      out.y_hat = fuse_learnable(out.y_past, out.y_future, bind("fusion.w_init"));
      break;
    case FusionStrategy::attention:
      break;
  }
  return out;
}

}  // namespace exost
