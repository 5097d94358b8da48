#include <doctest.h>

#include <cmath>
#include <random>

#include "exost/fusion.hpp"
#include "exost/model.hpp"
#include "checks/checks.hpp"
#include "support/support.hpp"

using namespace exost;
using ad::Tape;
using ad::Var;
using testing_support::max_abs_diff;
using testing_support::random_tensor;
using testing_support::values;

namespace {

BalancerWeights random_balancer(Tape& t, std::size_t tf, std::size_t width, std::mt19937_64& rng,
                                double lo = -1.0, double hi = 1.0) {
  return {t.constant(random_tensor({width, tf}, rng, lo, hi)), t.constant(random_tensor({width}, rng, lo, hi)),
          t.constant(random_tensor({tf, width}, rng, lo, hi)), t.constant(random_tensor({tf}, rng, lo, hi))};
}

BalancerWeights zero_balancer(Tape& t, std::size_t tf, std::size_t width) {
  return {t.constant(DTensor({width, tf})), t.constant(DTensor({width})),
          t.constant(DTensor({tf, width})), t.constant(DTensor({tf}))};
}

}  // namespace

TEST_CASE("context balancer") {
  std::mt19937_64 rng(1);
  const DTensor yp = random_tensor({2, 3, 4, 1}, rng), yf = random_tensor({2, 3, 4, 1}, rng);

  SUBCASE("equal branches triple the input") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 r(seed);
      // Dyadic inputs keep every intermediate exact.
      DTensor y0({2, 3, 4, 1});
      for (double& v : y0.values) v = static_cast<double>(static_cast<int>(r() % 64) - 32) / 8.0;
      Tape t;
      Balanced b = context_balance(t.constant(y0), t.constant(y0), random_balancer(t, 4, 3, r, -3, 3));
      for (std::size_t i = 0; i < y0.size(); ++i) CHECK(b.y_hat.value()[i] == 3.0 * y0.values[i]);
    }
  }
  SUBCASE("zero weights pin alpha at one half") {
    Tape t;
    Balanced b = context_balance(t.constant(yp), t.constant(yf), zero_balancer(t, 4, 4));
    for (double a : b.alpha.value()) CHECK(a == 0.5);
    for (std::size_t i = 0; i < yp.size(); ++i) {
      CHECK(b.y_hat.value()[i] == doctest::Approx(1.5 * (yp.values[i] + yf.values[i])).epsilon(1e-15));
    }
  }
  SUBCASE("alpha pinned to one") {
    Tape t;
    Var y = balance_with_alpha(t.constant(yp), t.constant(yf), t.fill(yp.shape, 1.0));
    for (std::size_t i = 0; i < yp.size(); ++i) {
      CHECK(y.value()[i] == doctest::Approx(2.0 * yp.values[i] + yf.values[i]).epsilon(1e-15));
    }
  }
  SUBCASE("alpha stays inside the open unit interval") {
    // Weights in ±0.3 bound the logit by 23, short of double-precision saturation.
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::mt19937_64 r(seed);
      Tape t;
      Balanced b = context_balance(t.constant(random_tensor({3, 6, 1}, r, -5, 5)),
                                   t.constant(random_tensor({3, 6, 1}, r, -5, 5)),
                                   random_balancer(t, 6, 4, r, -0.3, 0.3));
      CHECK(b.alpha.shape() == Shape{6});
      for (double a : b.alpha.value()) {
        CHECK(a > 0.0);
        CHECK(a < 1.0);
      }
    }
  }
  SUBCASE("not commutative") {
    Tape t;
    BalancerWeights w = random_balancer(t, 4, 2, rng);
    Var a = context_balance(t.constant(yp), t.constant(yf), w).y_hat;
    Var b = context_balance(t.constant(yf), t.constant(yp), w).y_hat;
    CHECK(max_abs_diff(a.value(), b.value()) > 1e-6);
  }
  SUBCASE("shape errors") {
    Tape t;
    CHECK_THROWS_AS(context_balance(t.constant(yp), t.constant(DTensor({2, 3, 5, 1})), zero_balancer(t, 4, 4)),
                    ShapeError);
  }
  SUBCASE("bottleneck width") {
    CHECK(balancer_width(24, 4) == 6);
    CHECK(balancer_width(8, 4) == 4);
    CHECK(balancer_width(3, 4) == 4);
  }
}

TEST_CASE("simple and learnable weights") {
  Tape t;
  CHECK(values(fuse_simple(t.constant({1}, {2.0}), t.constant({1}, {4.0}))) == std::vector<double>{3.0});

  std::mt19937_64 rng(2);
  const DTensor yp = random_tensor({3, 4, 1}, rng), yf = random_tensor({3, 4, 1}, rng);
  Var p = t.constant(yp), f = t.constant(yf);
  CHECK(values(fuse_simple(p, p)) == yp.values);
  CHECK(values(fuse_simple(p, f)) == values(fuse_simple(f, p)));

  Var uniform = fuse_learnable(p, f, t.constant({2}, {0.0, 0.0}));
  Var saturated = fuse_learnable(p, f, t.constant({2}, {50.0, 0.0}));
  Var pinned = balance_with_alpha(p, f, t.fill(yp.shape, 0.5));
  for (std::size_t i = 0; i < yp.size(); ++i) {
    CHECK(uniform.value()[i] == doctest::Approx(1.5 * (yp.values[i] + yf.values[i])).epsilon(1e-15));
    CHECK(std::abs(saturated.value()[i] - (2.0 * yp.values[i] + yf.values[i])) <= 1e-9);
    CHECK(uniform.value()[i] == doctest::Approx(pinned.value()[i]).epsilon(1e-15));
  }
  CHECK_THROWS_AS(fuse_simple(p, t.constant(DTensor({3, 5, 1}))), ShapeError);
  CHECK_THROWS_AS(fuse_learnable(p, f, t.constant(DTensor({3}))), ShapeError);
}

TEST_CASE("attention") {
  std::mt19937_64 rng(3);
  const DTensor hp = random_tensor({2, 4, 3}, rng), hf = random_tensor({2, 4, 3}, rng);
  Tape t;
  SUBCASE("zero projections average the states") {
    Var z = t.constant(DTensor({3, 3}));
    Var y = fuse_attention(t.constant(hp), t.constant(hf), {z, z, z});
    for (std::size_t i = 0; i < hp.size(); ++i) {
      CHECK(y.value()[i] == doctest::Approx(0.5 * (hp.values[i] + hf.values[i])).epsilon(1e-15));
    }
  }
  SUBCASE("equal branches give the common enhanced state") {
    AttentionWeights w{t.constant(random_tensor({3, 3}, rng)), t.constant(random_tensor({3, 3}, rng)),
                       t.constant(random_tensor({3, 3}, rng))};
    Enhanced e = cross_attend(t.constant(hp), t.constant(hp), w);
    CHECK(values(e.past) == values(e.future));
    Var y = fuse_attention(t.constant(hp), t.constant(hp), w);
    CHECK(max_abs_diff(y.value(), e.past.value()) <= 1e-15);
  }
}

TEST_CASE("whole model") {
  SUBCASE("default configuration emits N x 24 x 1") {
    ModelConfig c;
    c.nodes = 3;
    c.past_features = 2;
    c.future_features = 2;
    c.hidden = 8;
    const Model m(c, 1);
    std::mt19937_64 rng(1);
    Tape t;
    ParamBinder bind(t, m.params());
    ForwardResult r = exost_forward(bind, m, t.constant(random_tensor({3, 24, 1}, rng)),
                                    t.constant(random_tensor({3, 24, 2}, rng)),
                                    t.constant(random_tensor({3, 24, 2}, rng)), {});
    CHECK(r.y_hat.shape() == Shape{3, 24, 1});
    CHECK(r.alpha.shape() == Shape{24});
  }
  SUBCASE("degenerate composition reduces to one backbone on X") {
    // No selector, no balancer, zero exogenous weights and an identity-like
    // embedding: the past branch forecasts from X alone and the future branch
    // is silenced through its read-out.
    ModelConfig c = checks::toy_config(FusionStrategy::context, BackboneKind::mlp_mixer, GraphKind::identity);
    c.use_selector = false;
    c.use_balancer = false;
    c.activation = Activation::identity;
    c.hidden = 1;
    Model m(c, 2);
    auto& p = m.params();
    p.at("select.p.wx").values = {1.0};
    p.at("select.p.b").values = {0.0};
    std::fill(p.at("select.p.we").values.begin(), p.at("select.p.we").values.end(), 0.0);
    std::fill(p.at("backbone.f.readout.w").values.begin(), p.at("backbone.f.readout.w").values.end(), 0.0);
    std::fill(p.at("backbone.f.readout.b").values.begin(), p.at("backbone.f.readout.b").values.end(), 0.0);
    std::mt19937_64 rng(2);
    const DTensor x = random_tensor({2, 3, 1}, rng);
    Tape t;
    ParamBinder bind(t, std::as_const(p));
    ForwardResult r = exost_forward(bind, m, t.constant(x), t.constant(random_tensor({2, 3, 2}, rng)),
                                    t.constant(random_tensor({2, 3, 1}, rng)), {});
    ParamBinder direct(t, std::as_const(p));
    Var single = backbone_forward(t.constant(DTensor({2, 3, 1}, x.values)), Var{}, direct, "backbone.p",
                                  c.backbone_spec());
    CHECK(values(r.y_hat) == values(single));
  }
  SUBCASE("shared strategy uses a single encoder") {
    Model m(checks::toy_config(FusionStrategy::shared), 3);
    CHECK(m.params().contains("backbone.shared.readout.w"));
    CHECK_FALSE(m.params().contains("backbone.p.readout.w"));
    CHECK(m.backbone_prefix(true) == m.backbone_prefix(false));
  }
  SUBCASE("node count mismatch") {
    Model m(checks::toy_config(), 4);
    Tape t;
    ParamBinder bind(t, std::as_const(m.params()));
    CHECK_THROWS_AS(exost_forward(bind, m, t.constant(DTensor({3, 3, 1})), t.constant(DTensor({3, 3, 2})),
                                  t.constant(DTensor({3, 3, 1})), {}),
                    ShapeError);
  }
  SUBCASE("configuration round trip and validation") {
    ModelConfig c = checks::toy_config(FusionStrategy::attention);
    c.alpha = AlphaMode::per_sample;
    const ModelConfig back = model_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
}

TEST_CASE("fusion tags") {
  for (auto f : {FusionStrategy::context, FusionStrategy::shared, FusionStrategy::simple,
                 FusionStrategy::learnable, FusionStrategy::attention}) {
    CHECK(parse_fusion(to_string(f)) == f);
  }
  CHECK_THROWS_AS(parse_fusion("max"), std::invalid_argument);
  CHECK(parse_alpha_mode(to_string(AlphaMode::per_sample)) == AlphaMode::per_sample);
}
