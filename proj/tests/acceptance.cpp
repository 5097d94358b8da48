// Acceptance gate: runs every criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "checks/checks.hpp"
#include "cli/experiment.hpp"
#include "exost/fusion.hpp"
#include "exost/select.hpp"
#include "exost/runtime.hpp"
#include "support/support.hpp"

using namespace exost;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void note(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_metrics(const MetricsRecord& a, const MetricsRecord& b) {
  return same_bits(a.mae, b.mae) && same_bits(a.rmse, b.rmse) && same_bits(a.mape, b.mape) &&
         same_bits(a.mre, b.mre) && a.count == b.count;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// The small configuration used by the training criteria.
void tiny_model(ModelConfig& m) {
  m.backbone = BackboneKind::mlp_mixer;
  m.hidden = 16;
  m.dropout = 0.0;
}

// 1. Gradient integrity.

Outcome gradients() {
  Outcome o;
  const auto start = Clock::now();
  for (const checks::Measure& m : checks::gradient_integrity(5)) {
    o.note(m.worst < 1e-4, fmt("%-40s worst rel. error %.2e over %zu", m.name.c_str(), m.worst, m.instances));
  }
  const double s = seconds_since(start);
  o.note(s < 60.0, fmt("suite time %.1f s (limit 60 s)", s));
  return o;
}

// 2. Scalar-loop oracles.

Outcome oracles() {
  Outcome o;
  for (const checks::Measure& m : checks::oracle_agreement(25)) {
    o.note(m.worst <= 1e-9 && m.instances >= 20,
           fmt("%-40s max |diff| %.2e over %zu", m.name.c_str(), m.worst, m.instances));
  }
  return o;
}

// 3. Invariants.

Outcome invariants() {
  using testing_support::random_tensor;
  Outcome o;
  constexpr int kTrials = 200;

  double simplex = 0.0;
  double lo = 1.0, hi = 0.0, triple = 0.0, single = 0.0, half = 0.0, zero_alpha = 0.0;
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(trial);
    const std::size_t k = 1 + trial % 6, h = 1 + trial % 5, n = 1 + trial % 3, tf = 1 + trial % 7;
    const std::size_t width = balancer_width(tf, 4);
    ad::Tape t;
    ad::Var x = t.constant(random_tensor({2, n, 4, h}, rng, -3, 3));
    ad::Var gate = moe_gate(x, t.constant(random_tensor({k, h}, rng, -3, 3)));
    for (std::size_t p = 0; p < gate.value().size() / k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += gate.value()[p * k + j];
      simplex = std::max(simplex, std::abs(s - 1.0));
    }

    const DTensor bank = random_tensor({1, h, h}, rng);
    ad::Var mixed = moe_select(x, t.constant(bank), moe_gate(x, t.constant(random_tensor({1, h}, rng))));
    ad::Var linear = ad::linear(x, t.constant(DTensor({h, h}, bank.values)));
    single = std::max(single, testing_support::max_abs_diff(mixed.value(), linear.value()));

    const DTensor yp = random_tensor({2, n, tf, 1}, rng, -2, 2), yf = random_tensor({2, n, tf, 1}, rng, -2, 2);
    BalancerWeights w{t.constant(random_tensor({width, tf}, rng)), t.constant(random_tensor({width}, rng)),
                      t.constant(random_tensor({tf, width}, rng)), t.constant(random_tensor({tf}, rng))};
    Balanced b = context_balance(t.constant(yp), t.constant(yf), w);
    for (double a : b.alpha.value()) {
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
    Balanced same = context_balance(t.constant(yp), t.constant(yp), w);
    for (std::size_t i = 0; i < yp.size(); ++i) {
      triple = std::max(triple, std::abs(same.y_hat.value()[i] - 3.0 * yp.values[i]) /
                                    std::max(1.0, std::abs(yp.values[i])));
    }
    BalancerWeights zero{t.constant(DTensor({width, tf})), t.constant(DTensor({width})),
                         t.constant(DTensor({tf, width})), t.constant(DTensor({tf}))};
    Balanced z = context_balance(t.constant(yp), t.constant(yf), zero);
    for (double a : z.alpha.value()) zero_alpha = std::max(zero_alpha, std::abs(a - 0.5));
    for (std::size_t i = 0; i < yp.size(); ++i) {
      half = std::max(half, std::abs(z.y_hat.value()[i] - 1.5 * (yp.values[i] + yf.values[i])));
    }
  }
  o.note(simplex <= 1e-9, fmt("gate simplex: max |sum - 1| = %.2e", simplex));
  o.note(lo > 0.0 && hi < 1.0, fmt("alpha in (0,1): observed [%.6f, %.6f]", lo, hi));
  o.note(triple <= 1e-12, fmt("equal branches give 3*Y0: max rel. diff %.2e", triple));
  o.note(single == 0.0, fmt("K=1 mixture is a linear map: max |diff| %.2e", single));
  o.note(zero_alpha == 0.0 && half <= 1e-12,
         fmt("zero balancer: max |alpha - 0.5| %.2e, max |Y - 1.5(Yp+Yf)| %.2e", zero_alpha, half));

  bool rmse_ok = true;
  double mre = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::mt19937_64 rng(10'000 + trial);
    const std::size_t n = 1 + rng() % 50;
    const auto y = testing_support::uniform(n, rng, -50, 50), yh = testing_support::uniform(n, rng, -50, 50);
    const MetricsRecord m = compute_metrics(y, yh);
    rmse_ok = rmse_ok && m.rmse >= m.mae;
    double abs_y = 0.0;
    for (double v : y) abs_y += std::abs(v);
    const double expect = 100.0 * m.mae * static_cast<double>(n) / abs_y;
    mre = std::max(mre, std::abs(m.mre - expect) / std::max(1.0, expect));
  }
  o.note(rmse_ok, "RMSE >= MAE on 1000 random instances");
  o.note(mre <= 1e-12, fmt("MRE = 100*sum|e|/sum|y|: max rel. diff %.2e", mre));
  return o;
}

// 4. Protocol.

Outcome protocol() {
  Outcome o;
  const ChannelSelection sel;
  bool leak_free = true, ratios_ok = true;
  for (int trial = 0; trial < 60; ++trial) {
    std::mt19937_64 rng(trial);
    const std::size_t steps = 480 + rng() % 2000;
    Panel p = testing_support::random_panel(1, steps, 1, 1, rng);
    for (std::size_t s = 0; s < steps; ++s) p.at(0, s, 0) = static_cast<double>(s);
    const auto len = split_lengths(steps, SplitRatios{});
    ratios_ok = ratios_ok && len[0] == steps * 7 / 10 && len[1] == steps * 2 / 10 &&
                len[0] + len[1] + len[2] == steps;
    const PanelSplits sp = chronological_split(p, SplitRatios{}, 48);
    const WindowLayout layout = window_layout(p, 24, 24, sel);
    const double bounds[4] = {0.0, double(len[0]), double(len[0] + len[1]), double(steps)};
    const Panel* parts[3] = {&sp.train, &sp.val, &sp.test};
    for (int k = 0; k < 3; ++k) {
      for (const WindowSample& w : make_windows(*parts[k], layout, sel)) {
        for (const Block* b : {&w.x, &w.y}) {
          for (double v : b->data) leak_free = leak_free && v >= bounds[k] && v < bounds[k + 1];
        }
      }
    }
  }
  o.note(ratios_ok, "7:2:1 lengths over 60 random panel lengths");
  o.note(leak_free, "every window stays inside its own split");

  std::mt19937_64 rng(1);
  const Panel p = testing_support::random_panel(3, 100, 2, 1, rng);
  const auto windows = make_windows(p, window_layout(p, 24, 24, sel), sel);
  const ModelConfig defaults;
  o.note(defaults.steps_in == 24 && defaults.steps_out == 24 && windows.size() == 100 - 47 &&
             windows[0].x.steps == 24 && windows[0].y.steps == 24 && windows[0].e_future.steps == 24,
         fmt("24->24 windows: %zu from 100 steps", windows.size()));

  const TrainConfig tc;
  o.note(cosine_lr(0, tc) == 1e-2 && cosine_lr(tc.epochs - 1, tc) == 1e-7,
         fmt("cosine endpoints %.17g and %.17g", cosine_lr(0, tc), cosine_lr(tc.epochs - 1, tc)));

  const Panel small = testing_support::random_panel(2, 60, 1, 1, rng);
  const WindowLayout layout = window_layout(small, 6, 6, sel);
  ModelConfig mc;
  mc.nodes = 2;
  mc.past_features = layout.past_width();
  mc.future_features = layout.future_width();
  mc.steps_in = mc.steps_out = 6;
  mc.hidden = 4;
  mc.graph = GraphKind::adaptive;
  Model model(mc, 1);
  TrainHooks hooks;
  hooks.validation = [](std::size_t, double) { return 1.0; };
  TrainConfig stop;
  stop.batch = 16;
  const TrainResult r = train(model, make_windows(small.segment(0, 40), layout, sel),
                              make_windows(small.segment(40, 20), layout, sel), {}, stop, hooks);
  o.note(stop.patience == 30 && r.history.size() == 31 && r.best_epoch == 0 && r.stopped_early,
         fmt("constant validation trace stops after epoch %zu (best %zu)", r.history.back().epoch, r.best_epoch));
  return o;
}

// 5. Overfit.

Outcome overfit() {
  Outcome o;
  SynthConfig sc;
  sc.nodes = 4;
  sc.steps = 512;
  sc.noise = 0.0;
  const Panel raw = synth_generate(sc).panel;
  cli::RunConfig rc;
  rc.seed = 1;
  tiny_model(rc.model);
  const auto start = Clock::now();
  const cli::Prepared data = cli::prepare(raw, rc);
  Model model(cli::resolve_model_config(rc, data, raw.num_nodes()), rc.seed);
  if (!data.adjacency.values.empty()) model.set_adjacency(data.adjacency);
  TrainConfig tc;
  tc.epochs = 200;
  tc.patience = 200;
  tc.seed = rc.seed;
  const TrainResult r = train(model, data.train, data.val, data.target, tc);
  const MetricsRecord m = evaluate(model, data.train, data.target);
  const double s = seconds_since(start);
  const double ratio = m.mae / data.target.stddev;
  o.note(ratio < 0.05, fmt("train MAE %.4f = %.2f%% of target std %.4f after %zu epochs", m.mae,
                           100.0 * ratio, data.target.stddev, r.history.size()));
  o.note(s < 300.0, fmt("wall clock %.1f s (limit 300 s)", s));
  return o;
}

// 6. Exogenous benefit.

Outcome exogenous_benefit() {
  Outcome o;
  auto median_mae = [](const Panel& raw, bool bypass) {
    std::vector<double> maes;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      cli::RunConfig rc;
      rc.seed = seed;
      tiny_model(rc.model);
      rc.train.epochs = 40;
      rc.train.batch = 32;
      rc.model.use_selector = !bypass;
      rc.zero_exogenous = bypass;
      const cli::Prepared data = cli::prepare(raw, rc);
      maes.push_back(cli::run_experiment(rc, data, raw.num_nodes()).test.mae);
    }
    return median(maes);
  };
  SynthConfig sc;
  sc.nodes = 4;
  sc.steps = 512;
  sc.noise = 0.1;
  const Panel signal = synth_generate(sc).panel;
  const double full = median_mae(signal, false), bypass = median_mae(signal, true);
  const double gain = 1.0 - full / bypass;
  o.note(gain >= 0.2, fmt("injected signal: full %.4f vs bypassed %.4f, improvement %.1f%% (need >= 20%%)",
                          full, bypass, 100.0 * gain));
  sc.past_coef = 0.0;
  sc.future_coef = 0.0;
  const Panel null = synth_generate(sc).panel;
  const double full0 = median_mae(null, false), bypass0 = median_mae(null, true);
  const double gap = std::abs(full0 - bypass0) / bypass0;
  o.note(gap <= 0.05, fmt("a=b=0: full %.4f vs bypassed %.4f, gap %.1f%% (need <= 5%%)", full0, bypass0,
                          100.0 * gap));
  return o;
}

// Shared workspace for the command-level criteria.

struct Workspace {
  fs::path root;
  cli::RunConfig base;

  explicit Workspace(const std::string& name) {
    root = fs::temp_directory_path() / ("exost_acceptance_" + name);
    fs::remove_all(root);
    cli::SynthOptions s;
    s.synth.steps = 1024;
    s.out = (root / "data").string();
    cli::cmd_synth(s);
    base.data = (root / "data" / "panel.csv").string();
    base.schema = (root / "data" / "schema.json").string();
    base.seed = 3;
    tiny_model(base.model);
    base.train.epochs = 10;
    base.train.batch = 64;
  }
  ~Workspace() { fs::remove_all(root); }

  cli::RunConfig at(const std::string& dir) const {
    cli::RunConfig c = base;
    c.out = (root / dir).string();
    return c;
  }
};

// 7. Corruption grid.

Outcome corruption() {
  Outcome o;
  Workspace w("corrupt");
  const auto rows = cli::cmd_corrupt_eval(w.at("grid"));
  std::size_t zero = 0, random = 0;
  for (const auto& r : rows) {
    zero += r.label.starts_with("zero ");
    random += r.label.starts_with("random ");
  }
  o.note(rows.size() == 9 && zero == 4 && random == 4,
         fmt("grid rows: %zu zero + %zu random + baseline", zero, random));

  const MetricsRecord clean = cli::cmd_train(w.at("clean")).test;
  cli::RunConfig zeroed = w.at("zeroed");
  zeroed.zero_exogenous = true;
  const MetricsRecord hard = cli::cmd_train(zeroed).test;
  const auto edge = cli::cmd_corrupt_eval(w.at("edge"), {0.0, 1.0});
  o.note(same_metrics(edge[0].metrics, clean), "no-masking row equals the uncorrupted run");
  o.note(same_metrics(edge[1].metrics, clean) && same_metrics(edge[3].metrics, clean),
         fmt("ratio 0 rows equal the uncorrupted run (MAE %.6f)", clean.mae));
  o.note(same_metrics(edge[2].metrics, hard),
         fmt("zero 100%% row equals the hard-zeroed run (MAE %.6f)", hard.mae));
  return o;
}

// 8. Determinism.

Outcome determinism() {
  Outcome o;
  Workspace w("determinism");
  for (const char* dir : {"a", "b"}) {
    cli::cmd_train(w.at(dir));
    cli::cmd_eval(w.root / dir);
    cli::cmd_eval(w.root / dir, 3);
  }
  for (const char* f : {"model.exst", "history.jsonl", "report-1d.json", "report-1d.txt", "report-3d.json",
                        "report-3d.txt"}) {
    const std::string a = slurp(w.root / "a" / f), b = slurp(w.root / "b" / f);
    o.note(!a.empty() && a == b, fmt("%s identical (%zu bytes)", f, a.size()));
  }
  return o;
}

}  // namespace

int main() {
  configure_allocator();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradients},
      {"scalar-loop oracles", oracles},
      {"invariants", invariants},
      {"protocol", protocol},
      {"overfit", overfit},
      {"exogenous benefit", exogenous_benefit},
      {"corruption grid", corruption},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.note(false, std::string("threw: ") + e.what());
    }
    failures += !o.pass;
    std::printf("%s criterion %zu: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                seconds_since(start));
    for (const auto& line : o.lines) std::printf("    %s\n", line.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures;
}
