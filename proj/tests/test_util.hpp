#pragma once

#include <vector>

#include "pathflow/segment.hpp"

namespace pathflow::testing {

inline LiftedState constant_state(const PathGrid& grid, double c) {
  const std::vector<double> v{c};
  return LiftedState::constant(grid, v);
}

/// d = 1 state from its past samples and present value.
inline LiftedState state_1d(const PathGrid& grid, std::vector<double> past, double present) {
  const std::vector<double> y{present};
  return LiftedState(grid, y, past);
}

inline SmoothProfile constant_profile(double c) {
  return {1, [c](double) { return std::vector<double>{c}; }, [](double) { return std::vector<double>{0.0}; }};
}

}  // namespace pathflow::testing
