#pragma once

// Shared helpers for the test suites: seeded random tensors, small panels and
// bindings of DTensors onto a tape.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "exost/data.hpp"
#include "exost/tensor.hpp"

namespace testing_support {

using exost::DTensor;
using exost::Shape;

inline std::vector<double> uniform(std::size_t count, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(count);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline DTensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  return DTensor(shape, uniform(exost::numel(shape), rng, lo, hi));
}

/// Values bounded away from zero, for tests that must avoid ReLU kinks.
inline DTensor away_from_zero(const Shape& shape, std::mt19937_64& rng, double margin = 0.1) {
  DTensor t = random_tensor(shape, rng);
  for (auto& v : t.values) v = v < 0 ? v - margin : v + margin;
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<double> values(exost::ad::Var v) {
  return {v.value().begin(), v.value().end()};
}

/// Hourly panel with one target, `past` past channels and `future` future
/// channels, values drawn uniformly.
inline exost::Panel random_panel(std::size_t nodes, std::size_t steps, std::size_t past,
                                 std::size_t future, std::mt19937_64& rng) {
  exost::Panel p;
  for (std::size_t n = 0; n < nodes; ++n) p.nodes.push_back("n" + std::to_string(n));
  const auto start = exost::parse_timestamp("2021-03-01T00:00:00");
  for (std::size_t t = 0; t < steps; ++t) p.timestamps.push_back(start + std::chrono::hours(t));
  p.variables.push_back({"target", exost::VariableRole::target});
  for (std::size_t i = 0; i < past; ++i) {
    p.variables.push_back({"p" + std::to_string(i), exost::VariableRole::past_exogenous});
  }
  for (std::size_t i = 0; i < future; ++i) {
    p.variables.push_back({"f" + std::to_string(i), exost::VariableRole::future_exogenous});
  }
  p.data = uniform(nodes * steps * p.variables.size(), rng, -2.0, 5.0);
  p.missing.assign(p.data.size(), 0);
  return p;
}

}  // namespace testing_support
