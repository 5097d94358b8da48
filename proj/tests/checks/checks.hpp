#pragma once

// Measurement routines shared by the unit suites and the acceptance gate.
// Each returns the worst discrepancy it saw so callers decide the verdict.

#include <cstddef>
#include <string>
#include <vector>

#include "exost/model.hpp"

namespace checks {

struct Measure {
  std::string name;
  double worst = 0.0;
  std::size_t instances = 0;
};

/// Engine vs scalar-loop oracle, max absolute difference over random instances.
std::vector<Measure> oracle_agreement(std::size_t instances);

/// Max grad_check relative error per component.
std::vector<Measure> gradient_integrity(std::size_t instances);

/// Tiny model used for the full-forward oracle and gradient checks.
exost::ModelConfig toy_config(exost::FusionStrategy fusion = exost::FusionStrategy::context,
                              exost::BackboneKind backbone = exost::BackboneKind::grugcn,
                              exost::GraphKind graph = exost::GraphKind::adaptive);

}  // namespace checks
