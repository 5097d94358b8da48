#pragma once

// Run configuration and the data → model → metrics pipeline shared by the
// command-line subcommands.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exost/archive.hpp"
#include "exost/data.hpp"
#include "exost/model.hpp"
#include "exost/panel_io.hpp"
#include "exost/synth.hpp"
#include "exost/train.hpp"

namespace exost::cli {

/// Which samples a corruption touches: only the evaluation set, or every
/// split (the model then also trains on corrupted inputs).
enum class CorruptPhase { eval, all };

CorruptPhase parse_corrupt_phase(std::string_view tag);
std::string_view to_string(CorruptPhase phase);

struct CorruptionSpec {
  CorruptionStrategy strategy = CorruptionStrategy::zero;
  double ratio = 0.0;
  CorruptPhase phase = CorruptPhase::all;
};

struct RunConfig {
  std::string data;
  std::string schema;
  std::string out;
  std::uint64_t seed = 0;
  ModelConfig model;  // node and channel counts are filled in from the data
  ChannelSelection channels;
  bool zero_exogenous = false;  // hard-zero raw exogenous channels everywhere
  TrainConfig train;
  SplitRatios split;
  std::size_t horizon_days = 1;
  std::optional<CorruptionSpec> corruption;
  std::size_t jobs = 1;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Everything a model needs, derived from a raw panel.
struct Prepared {
  Scaler scaler;
  TargetScale target;
  WindowLayout layout;
  DTensor adjacency;  // fixed graph; empty for adaptive kinds
  std::vector<WindowSample> train, val, test;
};

/// Splits, scales (fitting on train unless `scaler` is given), windows and
/// applies the configured zeroing or corruption. Test windows cover
/// `config.horizon_days` days.
Prepared prepare(const Panel& raw, const RunConfig& config, const Scaler* scaler = nullptr);

/// Model configuration completed with the data geometry.
ModelConfig resolve_model_config(const RunConfig& config, const Prepared& data,
                                 std::size_t nodes);

struct Experiment {
  ModelConfig model_config;
  TensorMap archive;
  TrainResult training;
  MetricsRecord test;
};

/// Trains on `data` and evaluates on its test windows.
Experiment run_experiment(const RunConfig& config, const Prepared& data, std::size_t nodes);

Panel load_run_panel(const RunConfig& config);

// Reports.

struct ReportRow {
  std::string label;
  MetricsRecord metrics;
};

nlohmann::json metrics_json(const MetricsRecord& m);
std::string format_table(const std::string& title, const std::vector<ReportRow>& rows);
nlohmann::json table_json(const std::string& title, std::size_t horizon_days,
                          const std::vector<ReportRow>& rows);

// Commands. Each writes its outputs under `config.out` and returns the rows
// it reported.

struct SynthOptions {
  SynthConfig synth;
  std::string out;
};

void cmd_synth(const SynthOptions& options);
Experiment cmd_train(const RunConfig& config);
MetricsRecord cmd_eval(const std::filesystem::path& run_dir,
                       std::optional<std::size_t> horizon_days = std::nullopt);
std::vector<ReportRow> cmd_ablate(const RunConfig& config);
std::vector<ReportRow> cmd_corrupt_eval(const RunConfig& config,
                                        const std::vector<double>& ratios = {0.2, 0.4, 0.6, 0.8});
/// Adjacency of the configured graph as CSV rows.
std::string cmd_graph(const RunConfig& config, const std::optional<std::filesystem::path>& run_dir);

/// Runs `count` independent jobs on up to `workers` threads.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& job);

}  // namespace exost::cli
