#pragma once

// Synthetic panels with a known exogenous signal.
//
//   target_n(t) = a·past_n(t − lag) + b·driver_n(t) + A·sin(2π·hour(t)/24) + ε
//
// past_n is a period-12 sinusoid with a node-specific phase (past-exogenous),
// driver_n is a unit-variance AR(1) process (future-exogenous), and ε is
// Gaussian with standard deviation `noise`. Optional distractor channels are
// independent AR(1) series with no effect on the target.

#include <cstddef>
#include <cstdint>
#include <string>

#include "exost/data.hpp"
#include "exost/panel_io.hpp"

namespace exost {

struct SynthConfig {
  std::size_t nodes = 4;
  std::size_t steps = 512;
  std::size_t lag = 3;
  double noise = 0.0;
  std::uint64_t seed = 7;
  double past_coef = 1.0;
  double future_coef = 1.0;
  double seasonal_amplitude = 1.0;
  double driver_persistence = 0.5;
  std::size_t distractors = 0;
  std::string start = "2019-01-01T00:00:00";
  /// Upper bound on `lag`; generation refuses lags the history window cannot see.
  std::size_t steps_in = 24;
};

struct SynthData {
  Panel panel;
  PanelSchema schema;  // roles plus the generating coefficients in metadata
};

inline constexpr double kPastPeriod = 12.0;

/// Value of the deterministic past-exogenous series for node n at step t
/// (t may be negative).
double synth_past_signal(std::size_t node, std::size_t nodes, double t);

SynthData synth_generate(const SynthConfig& config);

}  // namespace exost
