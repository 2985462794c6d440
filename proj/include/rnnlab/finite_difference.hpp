#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace rnnlab {

/// Raised when the objective is not finite at a perturbed point.
class NonFiniteObjective : public std::runtime_error {
 public:
  NonFiniteObjective(std::size_t index, double value);
  std::size_t index() const { return index_; }
  double value() const { return value_; }

 private:
  std::size_t index_;
  double value_;
};

using ScalarObjective = std::function<double(std::span<const double>)>;

/// Central differences (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps).
std::vector<double> finite_difference_gradient(const ScalarObjective& f,
                                               std::span<const double> theta, double eps);

/// Scale floor under which differences are compared in absolute terms.
inline constexpr double kRelativeErrorFloor = 1e-3;

/// |a - b| / max(|a|, |b|, floor), maximised over entries.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = kRelativeErrorFloor);

}  // namespace rnnlab
