#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rnnlab {

inline constexpr double kGradcheckTolerance = 1e-5;

struct GradcheckResult {
  std::string component;
  double max_relative_error = 0.0;
  bool passed() const { return max_relative_error < kGradcheckTolerance; }
};

/// Names of every component the suite checks, in run order.
std::vector<std::string> gradcheck_components();

/// Central-difference checks of the cell, mogrifier and whole-model
/// backward passes at small sizes. `corrupt` names a component whose
/// analytic gradient is deliberately perturbed (empty for none).
std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, const std::string& corrupt = "");

}  // namespace rnnlab
