#include "exost/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace exost {

double synth_past_signal(std::size_t node, std::size_t nodes, double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double phase = two_pi * static_cast<double>(node) / static_cast<double>(nodes);
  return std::sin(two_pi * t / kPastPeriod + phase);
}

SynthData synth_generate(const SynthConfig& config) {
  if (config.lag >= config.steps_in) {
    throw std::invalid_argument("synthetic lag must be shorter than the history window");
  }
  if (config.nodes == 0 || config.steps == 0) {
    throw std::invalid_argument("synthetic panel needs at least one node and one step");
  }
  const std::size_t n_nodes = config.nodes;
  const std::size_t n_steps = config.steps;

  SynthData out;
  Panel& p = out.panel;
  p.variables = {{"target", VariableRole::target},
                 {"past_signal", VariableRole::past_exogenous},
                 {"future_driver", VariableRole::future_exogenous}};
  for (std::size_t d = 0; d < config.distractors; ++d) {
    p.variables.push_back({"distractor_" + std::to_string(d), VariableRole::past_exogenous});
  }
  const std::size_t f = p.variables.size();
  for (std::size_t n = 0; n < n_nodes; ++n) p.nodes.push_back("n" + std::to_string(n));
  const Timestamp start = parse_timestamp(config.start);
  for (std::size_t t = 0; t < n_steps; ++t) {
    p.timestamps.push_back(start + std::chrono::hours(static_cast<long>(t)));
  }
  p.data.assign(n_nodes * n_steps * f, 0.0);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double phi = config.driver_persistence;
  const double innovation = std::sqrt(1.0 - phi * phi);

  const auto dates = encode_time(p.timestamps);
  for (std::size_t n = 0; n < n_nodes; ++n) {
    double driver = normal(rng);
    std::vector<double> distract(config.distractors);
    for (auto& d : distract) d = normal(rng);
    for (std::size_t t = 0; t < n_steps; ++t) {
      if (t > 0) {
        driver = phi * driver + innovation * normal(rng);
        for (auto& d : distract) d = phi * d + innovation * normal(rng);
      }
      const double past_now = synth_past_signal(n, n_nodes, static_cast<double>(t));
      const double past_lagged = synth_past_signal(
          n, n_nodes, static_cast<double>(t) - static_cast<double>(config.lag));
      // dates[t][0] is sin(2π·hour/24).
      const double seasonal = config.seasonal_amplitude * dates[t][0];
      const double eps = config.noise > 0.0 ? config.noise * normal(rng) : 0.0;
      p.at(n, t, 0) = config.past_coef * past_lagged + config.future_coef * driver + seasonal + eps;
      p.at(n, t, 1) = past_now;
      p.at(n, t, 2) = driver;
      for (std::size_t d = 0; d < config.distractors; ++d) p.at(n, t, 3 + d) = distract[d];
    }
  }

  out.schema.variables = p.variables;
  out.schema.metadata = {
      {"generator", "synthetic"},
      {"nodes", n_nodes},
      {"steps", n_steps},
      {"lag", config.lag},
      {"noise", config.noise},
      {"seed", config.seed},
      {"past_coef", config.past_coef},
      {"future_coef", config.future_coef},
      {"seasonal_amplitude", config.seasonal_amplitude},
      {"driver_persistence", config.driver_persistence},
      {"past_period", kPastPeriod},
      {"distractors", config.distractors},
  };
  p.validate();
  return out;
}

}  // namespace exost
