#include <doctest.h>

#include "checks/checks.hpp"

TEST_CASE("engine agrees with scalar-loop oracles") {
  for (const auto& m : checks::oracle_agreement(20)) {
    CAPTURE(m.name);
    CHECK(m.instances >= 20);
    CHECK(m.worst <= 1e-9);
  }
}

TEST_CASE("gradients match central differences") {
  for (const auto& m : checks::gradient_integrity(3)) {
    CAPTURE(m.name);
    CHECK(m.worst < 1e-4);
  }
}
