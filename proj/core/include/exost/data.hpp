#pragma once

// Node × time × variable panels and everything between a raw panel and
// model-ready windows: date encoding, scaling, chronological splits,
// windowing, and exogenous corruption.

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace exost {

/// Raised for malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class VariableRole { target, past_exogenous, future_exogenous, date_exogenous };

VariableRole parse_role(std::string_view tag);
std::string_view to_string(VariableRole role);

struct Variable {
  std::string name;
  VariableRole role;
};

using Timestamp = std::chrono::sys_seconds;

/// Accepts `YYYY-MM-DD[T| ]HH:MM[:SS][Z]`.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

struct Panel {
  std::vector<std::string> nodes;
  std::vector<Timestamp> timestamps;
  std::vector<Variable> variables;
  /// Node-major N×T×F.
  std::vector<double> data;
  /// Same layout as `data`; 1 marks an entry absent from the source file.
  std::vector<std::uint8_t> missing;

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_steps() const { return timestamps.size(); }
  std::size_t num_variables() const { return variables.size(); }

  std::size_t index(std::size_t node, std::size_t step, std::size_t var) const {
    return (node * num_steps() + step) * num_variables() + var;
  }
  double& at(std::size_t node, std::size_t step, std::size_t var) {
    return data[index(node, step, var)];
  }
  double at(std::size_t node, std::size_t step, std::size_t var) const {
    return data[index(node, step, var)];
  }

  std::size_t target_index() const;
  std::vector<std::size_t> channels(VariableRole role) const;
  /// Checks role and ordering invariants; throws DataError.
  void validate() const;
  /// Contiguous steps [begin, begin + length).
  Panel segment(std::size_t begin, std::size_t length) const;
};

/// Forward-fills missing entries per node and variable; leading gaps become 0.
void fill_missing(Panel& panel);

// Date features.

inline constexpr std::size_t kDateChannels = 11;
using DateFeatures = std::array<double, kDateChannels>;

/// [sin hour, cos hour, sin month, cos month, weekday one-hot (Monday = 0)].
DateFeatures encode_time(Timestamp ts);
std::vector<DateFeatures> encode_time(const std::vector<Timestamp>& timestamps);

// Chronological split.

struct SplitRatios {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};

struct PanelSplits {
  Panel train, val, test;
};

/// Segment lengths for `steps`: floor(steps·ratio) for train and validation,
/// the remainder to test.
std::array<std::size_t, 3> split_lengths(std::size_t steps, const SplitRatios& ratios);
PanelSplits chronological_split(const Panel& panel, const SplitRatios& ratios,
                                std::size_t min_segment);

// Scaling.

struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  double normalize(std::size_t var, double v) const { return (v - mean[var]) / stddev[var]; }
  double denormalize(std::size_t var, double v) const { return v * stddev[var] + mean[var]; }
};

inline constexpr double kStdFloor = 1e-8;

enum class ScaleDirection { forward, inverse };

/// Per-variable mean and population standard deviation over all nodes and
/// steps of `train`, missing entries excluded.
Scaler fit_scaler(const Panel& train);
Panel apply_scaler(const Panel& panel, const Scaler& scaler, ScaleDirection direction);

// Windows.

/// Dense node × step × channel block.
struct Block {
  std::size_t nodes = 0;
  std::size_t steps = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Block() = default;
  Block(std::size_t n, std::size_t t, std::size_t c)
      : nodes(n), steps(t), channels(c), data(n * t * c, 0.0) {}

  double& at(std::size_t n, std::size_t t, std::size_t c) {
    return data[(n * steps + t) * channels + c];
  }
  double at(std::size_t n, std::size_t t, std::size_t c) const {
    return data[(n * steps + t) * channels + c];
  }
  bool operator==(const Block&) const = default;
};

/// Which exogenous groups reach the model (the P/F/D data ablation axes).
struct ChannelSelection {
  bool use_past = true;
  bool use_future = true;
  bool use_date = true;
};

/// Channel counts of the exogenous blocks. Date channels sit after the raw
/// exogenous channels in both blocks.
struct WindowLayout {
  std::size_t steps_in = 24;
  std::size_t steps_out = 24;
  std::size_t past_exo = 0;
  std::size_t future_exo = 0;
  std::size_t date = 0;

  std::size_t past_width() const { return past_exo + date; }
  std::size_t future_width() const { return future_exo + date; }
};

WindowLayout window_layout(const Panel& panel, std::size_t steps_in, std::size_t steps_out,
                           const ChannelSelection& selection);

/// One training or evaluation instance starting at `offset` in its segment.
///
/// With `days` > 1 the sample covers a rolled horizon: `e_past` spans
/// steps_in + (days - 1)·steps_out history-aligned steps and `e_future` and
/// `y` span days·steps_out steps, so the slices for day d are contiguous.
struct WindowSample {
  std::size_t offset = 0;
  std::size_t days = 1;
  Block x;         // N × steps_in × 1 target history
  Block e_past;    // N × (steps_in + (days-1)·steps_out) × past_width
  Block e_future;  // N × days·steps_out × future_width
  Block y;         // N × days·steps_out × 1

  bool operator==(const WindowSample&) const = default;
};

std::size_t window_count(std::size_t length, std::size_t steps_in, std::size_t steps_out,
                         std::size_t stride = 1, std::size_t days = 1);

std::vector<WindowSample> make_windows(const Panel& segment, const WindowLayout& layout,
                                       const ChannelSelection& selection,
                                       std::size_t stride = 1, std::size_t days = 1);

// Corruption.

enum class CorruptionStrategy { zero, random_normal };

CorruptionStrategy parse_corruption(std::string_view tag);
std::string_view to_string(CorruptionStrategy strategy);

/// Replaces each raw exogenous entry independently with probability `ratio`.
/// The replacement mask depends only on `seed`, not on the strategy. Date
/// channels are left alone unless `include_date` is set.
std::vector<WindowSample> corrupt_exogenous(std::vector<WindowSample> samples,
                                            const WindowLayout& layout,
                                            CorruptionStrategy strategy, double ratio,
                                            std::uint64_t seed, bool include_date = false);

/// Writes 0 into every raw exogenous entry.
std::vector<WindowSample> zero_exogenous(std::vector<WindowSample> samples,
                                         const WindowLayout& layout);

}  // namespace exost
