#pragma once

// Optimization and evaluation: forecast metrics, the cosine schedule, AdamW,
// early stopping, the training loop and rolled multi-day evaluation.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "exost/data.hpp"
#include "exost/model.hpp"

namespace exost {

struct MetricsRecord {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent, over entries with |y| >= kMapeFloor
  double mre = 0.0;   // percent; NaN when Σ|y| = 0
  std::size_t count = 0;
  std::size_t mape_count = 0;

  bool mre_defined() const { return mre == mre; }
};

inline constexpr double kMapeFloor = 1e-8;

/// Throws std::invalid_argument on empty or mismatched inputs.
MetricsRecord compute_metrics(std::span<const double> y, std::span<const double> y_hat);

enum class LossKind { mae, mse };

LossKind parse_loss(std::string_view tag);
std::string_view to_string(LossKind kind);

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch = 512;
  double lr_max = 1e-2;
  double lr_min = 1e-7;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t patience = 30;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::mae;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// lr_min + ½(lr_max − lr_min)(1 + cos(π·e/(E − 1))); a single-epoch run stays at lr_max.
double cosine_lr(std::size_t epoch, const TrainConfig& config);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct Moments {
  std::vector<double> m, v;
};

/// One decoupled AdamW update of `p` from `p.grad` at 1-based `step`.
void adamw_update(DTensor& p, Moments& state, std::size_t step, double lr, const AdamHyper& hp);

class AdamW {
 public:
  explicit AdamW(AdamHyper hp) : hp_(hp) {}

  /// Updates every parameter from its accumulated gradient, then clears the
  /// gradients. Throws TrainingError on a non-finite gradient.
  void step(ParamStore& params, double lr);
  std::size_t steps() const { return step_; }

 private:
  AdamHyper hp_;
  std::size_t step_ = 0;
  std::map<std::string, Moments> state_;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counts epochs without strict improvement of a minimized score.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Returns true when the score improved on the best so far.
  bool observe(std::size_t epoch, double score);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Batched model inputs: x [B,N,T_in,1], e_past [B,N,T_p,F_p], e_future
/// [B,N,T_f,F_f], y [B,N,T_f,1].
struct Batch {
  DTensor x, e_past, e_future, y;
};

/// Stacks day-1 slices of `samples[indices]`.
Batch collate(std::span<const WindowSample> samples, std::span<const std::size_t> indices);

/// Maps batched inputs to a [B,N,T_f,1] forecast in normalized units.
using Forecaster =
    std::function<DTensor(const DTensor& x, const DTensor& e_past, const DTensor& e_future)>;

Forecaster model_forecaster(const Model& model);

/// Normalization of the target variable.
struct TargetScale {
  double mean = 0.0;
  double stddev = 1.0;
};

TargetScale target_scale(const Scaler& scaler, const Panel& panel);

/// Rolled evaluation over `days`. Day 1 is a direct forecast; later days
/// feed forecasts back as target history while exogenous inputs advance.
/// Metrics are computed on denormalized values over the whole horizon.
MetricsRecord evaluate(const Forecaster& forecaster, std::span<const WindowSample> samples,
                       const TargetScale& scale, std::size_t days = 1,
                       std::size_t chunk = 256);
MetricsRecord evaluate(const Model& model, std::span<const WindowSample> samples,
                       const TargetScale& scale, std::size_t days = 1);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double val_mae = 0.0;
  bool improved = false;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<double> epoch_seconds;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  bool stopped_early = false;
};

struct TrainHooks {
  /// Replaces the measured validation MAE of an epoch.
  std::function<double(std::size_t epoch, double measured)> validation;
  /// Called after every epoch with the record just appended.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch training with per-epoch seeded shuffling, validation-based
/// early stopping and restoration of the best parameters.
TrainResult train(Model& model, std::span<const WindowSample> train_set,
                  std::span<const WindowSample> val_set, const TargetScale& scale,
                  const TrainConfig& config, const TrainHooks& hooks = {});

/// Mean training loss (normalized units) of `model` over `samples`.
double dataset_loss(const Model& model, std::span<const WindowSample> samples, LossKind kind);

}  // namespace exost
