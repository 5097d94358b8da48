#include "cli/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "exost/graph.hpp"

namespace exost::cli {

namespace fs = std::filesystem;
using exost::to_string;

CorruptPhase parse_corrupt_phase(std::string_view tag) {
  if (tag == "eval") return CorruptPhase::eval;
  if (tag == "all") return CorruptPhase::all;
  throw std::invalid_argument("unknown corruption phase '" + std::string(tag) + "'");
}

std::string_view to_string(CorruptPhase phase) {
  return phase == CorruptPhase::eval ? "eval" : "all";
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {
      {"data", c.data},
      {"schema", c.schema},
      {"seed", c.seed},
      {"model", to_json(c.model)},
      {"channels",
       {{"past", c.channels.use_past},
        {"future", c.channels.use_future},
        {"date", c.channels.use_date}}},
      {"zero_exogenous", c.zero_exogenous},
      {"train", to_json(c.train)},
      {"split", {c.split.train, c.split.val, c.split.test}},
      {"horizon_days", c.horizon_days},
      {"corruption", nullptr},
  };
  if (c.corruption) {
    j["corruption"] = {{"strategy", std::string(to_string(c.corruption->strategy))},
                       {"ratio", c.corruption->ratio},
                       {"phase", std::string(to_string(c.corruption->phase))}};
  }
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.data = j.at("data").get<std::string>();
  c.schema = j.at("schema").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model = model_config_from_json(j.at("model"));
  const auto& ch = j.at("channels");
  c.channels = {ch.at("past").get<bool>(), ch.at("future").get<bool>(), ch.at("date").get<bool>()};
  c.zero_exogenous = j.at("zero_exogenous").get<bool>();
  c.train = train_config_from_json(j.at("train"));
  const auto& sp = j.at("split");
  c.split = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
  c.horizon_days = j.at("horizon_days").get<std::size_t>();
  if (const auto& cj = j.at("corruption"); !cj.is_null()) {
    c.corruption = CorruptionSpec{parse_corruption(cj.at("strategy").get<std::string>()),
                                  cj.at("ratio").get<double>(),
                                  parse_corrupt_phase(cj.at("phase").get<std::string>())};
  }
  return c;
}

namespace {

DTensor fixed_adjacency(const Panel& train, const ModelConfig& m) {
  const std::size_t n = train.num_nodes();
  if (m.graph == GraphKind::identity || n < 2) return identity_graph(n).adjacency;
  const std::size_t k = std::min(m.graph_topk, n - 1);
  return with_self_loops_normalized(pearson_topk_adjacency(target_series(train), k).adjacency);
}

constexpr std::uint64_t kCorruptSeedMix = 0xc0441a7e5eedULL;

}  // namespace

Prepared prepare(const Panel& raw, const RunConfig& config, const Scaler* scaler) {
  const ModelConfig& m = config.model;
  if (config.horizon_days == 0 || config.horizon_days > 3) {
    throw std::invalid_argument("horizon must be 1, 2 or 3 days");
  }
  PanelSplits splits = chronological_split(raw, config.split, m.steps_in + m.steps_out);

  Prepared p;
  p.scaler = scaler ? *scaler : fit_scaler(splits.train);
  if (p.scaler.mean.size() != raw.num_variables()) {
    throw DataError("scaler covers " + std::to_string(p.scaler.mean.size()) +
                    " variables, data has " + std::to_string(raw.num_variables()));
  }
  p.target = target_scale(p.scaler, raw);
  const Panel train = apply_scaler(splits.train, p.scaler, ScaleDirection::forward);
  const Panel val = apply_scaler(splits.val, p.scaler, ScaleDirection::forward);
  const Panel test = apply_scaler(splits.test, p.scaler, ScaleDirection::forward);

  p.layout = window_layout(raw, m.steps_in, m.steps_out, config.channels);
  p.train = make_windows(train, p.layout, config.channels);
  p.val = make_windows(val, p.layout, config.channels);
  p.test = make_windows(test, p.layout, config.channels, 1, config.horizon_days);
  if (p.test.empty()) {
    throw DataError("test segment of " + std::to_string(test.num_steps()) +
                    " steps is too short for a " + std::to_string(config.horizon_days) +
                    "-day rollout (needs " +
                    std::to_string(m.steps_in + config.horizon_days * m.steps_out) + ")");
  }

  if (config.zero_exogenous) {
    p.train = zero_exogenous(std::move(p.train), p.layout);
    p.val = zero_exogenous(std::move(p.val), p.layout);
    p.test = zero_exogenous(std::move(p.test), p.layout);
  }
  if (const auto& c = config.corruption) {
    const std::uint64_t base = config.seed ^ kCorruptSeedMix;
    if (c->phase == CorruptPhase::all) {
      p.train = corrupt_exogenous(std::move(p.train), p.layout, c->strategy, c->ratio, base + 1);
      p.val = corrupt_exogenous(std::move(p.val), p.layout, c->strategy, c->ratio, base + 2);
    }
    p.test = corrupt_exogenous(std::move(p.test), p.layout, c->strategy, c->ratio, base + 3);
  }

  if (m.graph == GraphKind::pearson_topk || m.graph == GraphKind::identity) {
    p.adjacency = fixed_adjacency(train, m);
  }
  return p;
}

ModelConfig resolve_model_config(const RunConfig& config, const Prepared& data,
                                 std::size_t nodes) {
  ModelConfig m = config.model;
  m.nodes = nodes;
  m.target_features = 1;
  m.past_features = data.layout.past_width();
  m.future_features = data.layout.future_width();
  return m;
}

namespace {

TensorMap model_archive(const Model& model, const Prepared& data) {
  TensorMap out(model.params().begin(), model.params().end());
  for (auto& [name, t] : out) t.grad.clear();
  out["scaler.mean"] = DTensor({data.scaler.mean.size()}, data.scaler.mean);
  out["scaler.std"] = DTensor({data.scaler.stddev.size()}, data.scaler.stddev);
  if (!data.adjacency.values.empty()) {
    DTensor a = data.adjacency;
    a.grad.clear();
    out["graph.adjacency"] = std::move(a);
  }
  return out;
}

std::uint64_t train_seed(std::uint64_t seed) { return seed * 0x9e3779b97f4a7c15ULL + 1; }

}  // namespace

Experiment run_experiment(const RunConfig& config, const Prepared& data, std::size_t nodes) {
  Experiment e;
  e.model_config = resolve_model_config(config, data, nodes);
  Model model(e.model_config, config.seed);
  if (!data.adjacency.values.empty()) model.set_adjacency(data.adjacency);
  TrainConfig tc = config.train;
  tc.seed = train_seed(config.seed);
  e.training = train(model, data.train, data.val, data.target, tc);
  e.test = evaluate(model, data.test, data.target, config.horizon_days);
  e.archive = model_archive(model, data);
  return e;
}

Panel load_run_panel(const RunConfig& config) {
  if (config.data.empty()) throw std::invalid_argument("no data file given (--data)");
  if (config.schema.empty()) throw std::invalid_argument("no schema file given (--schema)");
  return load_panel(config.data, load_schema(config.schema));
}

nlohmann::json metrics_json(const MetricsRecord& m) {
  nlohmann::json j = {{"mae", m.mae},       {"rmse", m.rmse},   {"mape", m.mape},
                      {"mre", nullptr},     {"count", m.count}, {"mape_count", m.mape_count}};
  if (m.mre_defined()) j["mre"] = m.mre;
  return j;
}

std::string format_table(const std::string& title, const std::vector<ReportRow>& rows) {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.label.size() + 2);
  std::string out = title + "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s%12s%12s%12s%12s\n", static_cast<int>(width), "variant",
                "MAE", "RMSE", "MAPE(%)", "MRE(%)");
  out += buf;
  for (const auto& r : rows) {
    const MetricsRecord& m = r.metrics;
    char mre[32];
    if (m.mre_defined()) {
      std::snprintf(mre, sizeof mre, "%12.4f", m.mre);
    } else {
      std::snprintf(mre, sizeof mre, "%12s", "undefined");
    }
    std::snprintf(buf, sizeof buf, "%-*s%12.4f%12.4f%12.4f%s\n", static_cast<int>(width),
                  r.label.c_str(), m.mae, m.rmse, m.mape, mre);
    out += buf;
  }
  return out;
}

nlohmann::json table_json(const std::string& title, std::size_t horizon_days,
                          const std::vector<ReportRow>& rows) {
  nlohmann::json j = {{"title", title}, {"horizon_days", horizon_days}, {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) j["rows"].push_back({{"label", r.label}, {"metrics", metrics_json(r.metrics)}});
  return j;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path output_dir(const RunConfig& config) {
  if (config.out.empty()) throw std::invalid_argument("no output directory given (--out)");
  fs::path dir(config.out);
  fs::create_directories(dir);
  return dir;
}

void write_report(const fs::path& dir, const std::string& stem, const std::string& title,
                  std::size_t days, const std::vector<ReportRow>& rows) {
  write_text(dir / (stem + ".json"), table_json(title, days, rows).dump(2) + "\n");
  write_text(dir / (stem + ".txt"), format_table(title, rows));
}

std::string report_stem(std::size_t days) { return "report-" + std::to_string(days) + "d"; }

std::string horizon_title(const std::string& what, std::size_t days) {
  return what + " (" + std::to_string(days) + "-day horizon)";
}

}  // namespace

void cmd_synth(const SynthOptions& options) {
  if (options.out.empty()) throw std::invalid_argument("no output directory given (--out)");
  const SynthData d = synth_generate(options.synth);
  fs::path dir(options.out);
  fs::create_directories(dir);
  save_panel(d.panel, dir / "panel.csv");
  save_schema(d.schema, dir / "schema.json");
}

Experiment cmd_train(const RunConfig& config) {
  const fs::path dir = output_dir(config);
  const Panel raw = load_run_panel(config);
  const Prepared data = prepare(raw, config, nullptr);
  Experiment e = run_experiment(config, data, raw.num_nodes());

  RunConfig archived = config;
  archived.model = e.model_config;
  write_text(dir / "config.json", to_json(archived).dump(2) + "\n");
  write_archive(dir / "model.exst", e.archive);
  std::string history, timing;
  for (std::size_t i = 0; i < e.training.history.size(); ++i) {
    history += to_json(e.training.history[i]).dump() + "\n";
    timing += nlohmann::json{{"epoch", i}, {"seconds", e.training.epoch_seconds[i]}}.dump() + "\n";
  }
  write_text(dir / "history.jsonl", history);
  write_text(dir / "timing.jsonl", timing);
  write_report(dir, report_stem(config.horizon_days), horizon_title("test metrics", config.horizon_days),
               config.horizon_days, {{"model", e.test}});
  return e;
}

MetricsRecord cmd_eval(const fs::path& run_dir, std::optional<std::size_t> horizon_days) {
  if (!fs::exists(run_dir / "model.exst")) {
    throw std::runtime_error("missing model archive in " + run_dir.string() + " (train first)");
  }
  RunConfig config = run_config_from_json(nlohmann::json::parse(read_text(run_dir / "config.json")));
  if (horizon_days) config.horizon_days = *horizon_days;
  TensorMap archive = read_archive(run_dir / "model.exst");

  auto take = [&](const std::string& name) {
    auto it = archive.find(name);
    if (it == archive.end()) throw ArchiveError("archive lacks '" + name + "'");
    DTensor t = std::move(it->second);
    archive.erase(it);
    return t;
  };
  Scaler scaler{take("scaler.mean").values, take("scaler.std").values};
  const Panel raw = load_run_panel(config);
  const Prepared data = prepare(raw, config, &scaler);
  const ModelConfig resolved = resolve_model_config(config, data, raw.num_nodes());
  if (to_json(resolved) != to_json(config.model)) {
    throw std::runtime_error("data schema does not match the archived model configuration");
  }
  Model model(resolved, config.seed);
  if (archive.contains("graph.adjacency")) model.set_adjacency(take("graph.adjacency"));
  if (archive.size() != model.params().size()) {
    throw ArchiveError("archive holds " + std::to_string(archive.size()) +
                       " parameters, configuration expects " +
                       std::to_string(model.params().size()));
  }
  for (auto& [name, p] : model.params()) {
    DTensor t = take(name);
    if (t.shape != p.shape) {
      throw ArchiveError("parameter '" + name + "' has shape " + to_string(t.shape) +
                         ", expected " + to_string(p.shape));
    }
    p = std::move(t);
  }
  const MetricsRecord m = evaluate(model, data.test, data.target, config.horizon_days);
  write_report(run_dir, report_stem(config.horizon_days),
               horizon_title("test metrics", config.horizon_days), config.horizon_days,
               {{"model", m}});
  return m;
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

struct Variant {
  std::string label;
  RunConfig config;
};

std::vector<ReportRow> run_variants(const std::vector<Variant>& variants, const Panel& raw,
                                    std::size_t jobs) {
  std::vector<ReportRow> rows(variants.size());
  parallel_for(variants.size(), jobs, [&](std::size_t i) {
    const Prepared data = prepare(raw, variants[i].config, nullptr);
    rows[i] = {variants[i].label, run_experiment(variants[i].config, data, raw.num_nodes()).test};
  });
  return rows;
}

}  // namespace

std::vector<ReportRow> cmd_ablate(const RunConfig& config) {
  const fs::path dir = output_dir(config);
  const Panel raw = load_run_panel(config);
  std::vector<Variant> variants;
  for (unsigned mask = 7; mask >= 1; --mask) {
    RunConfig c = config;
    c.channels = {(mask & 4) != 0, (mask & 2) != 0, (mask & 1) != 0};
    std::string label;
    for (auto [bit, tag] : {std::pair{4u, "P"}, {2u, "F"}, {1u, "D"}}) {
      if (mask & bit) label += label.empty() ? tag : std::string("+") + tag;
    }
    variants.push_back({label, c});
  }
  {
    RunConfig c = config;
    c.model.use_selector = false;
    variants.push_back({"no-selector", c});
  }
  {
    RunConfig c = config;
    c.model.use_balancer = false;
    variants.push_back({"no-balancer", c});
  }
  for (FusionStrategy f : {FusionStrategy::context, FusionStrategy::shared, FusionStrategy::simple,
                           FusionStrategy::learnable, FusionStrategy::attention}) {
    RunConfig c = config;
    c.model.fusion = f;
    variants.push_back({"fusion:" + std::string(to_string(f)), c});
  }
  std::vector<ReportRow> rows = run_variants(variants, raw, config.jobs);
  write_report(dir, "ablation", horizon_title("ablation", config.horizon_days),
               config.horizon_days, rows);
  return rows;
}

std::vector<ReportRow> cmd_corrupt_eval(const RunConfig& config, const std::vector<double>& ratios) {
  const fs::path dir = output_dir(config);
  const Panel raw = load_run_panel(config);
  const CorruptPhase phase = config.corruption ? config.corruption->phase : CorruptPhase::all;

  std::vector<Variant> variants;
  RunConfig clean = config;
  clean.corruption.reset();
  variants.push_back({"no-masking", clean});
  for (CorruptionStrategy s : {CorruptionStrategy::zero, CorruptionStrategy::random_normal}) {
    for (double r : ratios) {
      RunConfig c = config;
      c.corruption = CorruptionSpec{s, r, phase};
      char label[64];
      std::snprintf(label, sizeof label, "%s %g%%", std::string(to_string(s)).c_str(), r * 100.0);
      variants.push_back({label, c});
    }
  }

  std::vector<ReportRow> rows;
  if (phase == CorruptPhase::all) {
    rows = run_variants(variants, raw, config.jobs);
  } else {
    // One clean model, evaluated on every corrupted test set.
    const Prepared base = prepare(raw, clean, nullptr);
    Experiment e = run_experiment(clean, base, raw.num_nodes());
    Model model(e.model_config, config.seed);
    for (auto& [name, p] : model.params()) p = e.archive.at(name);
    if (!base.adjacency.values.empty()) model.set_adjacency(base.adjacency);
    rows.resize(variants.size());
    parallel_for(variants.size(), config.jobs, [&](std::size_t i) {
      const Prepared data = prepare(raw, variants[i].config, &base.scaler);
      rows[i] = {variants[i].label, evaluate(model, data.test, data.target, config.horizon_days)};
    });
  }
  write_report(dir, "corruption", horizon_title("exogenous corruption", config.horizon_days),
               config.horizon_days, rows);
  return rows;
}

std::string cmd_graph(const RunConfig& config, const std::optional<fs::path>& run_dir) {
  const Panel raw = load_run_panel(config);
  DTensor a;
  if (config.model.graph == GraphKind::pearson_topk || config.model.graph == GraphKind::identity) {
    a = prepare(raw, config, nullptr).adjacency;
  } else {
    if (!run_dir) throw std::invalid_argument("adaptive graphs are read from a trained run (--model)");
    const TensorMap archive = read_archive(*run_dir / "model.exst");
    auto get = [&](const char* name) {
      auto it = archive.find(name);
      if (it == archive.end()) throw ArchiveError(std::string("archive lacks '") + name + "'");
      return it->second;
    };
    a = config.model.graph == GraphKind::adaptive
            ? adaptive_adjacency(get("graph.embed")).adjacency
            : adaptive_adjacency_directed(get("graph.source"), get("graph.target")).adjacency;
  }
  const std::size_t n = a.shape.at(0);
  std::string out = "node";
  for (const auto& id : raw.nodes) out += "," + id;
  out += "\n";
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    out += raw.nodes.at(i);
    for (std::size_t j = 0; j < n; ++j) {
      std::snprintf(buf, sizeof buf, ",%.6f", a.values[i * n + j]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace exost::cli
