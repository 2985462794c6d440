#include "rnnlab/finite_difference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rnnlab/matrix.hpp"

namespace rnnlab {

NonFiniteObjective::NonFiniteObjective(std::size_t index, double value)
    : std::runtime_error("objective is not finite (" + std::to_string(value) +
                         ") when perturbing parameter " + std::to_string(index)),
      index_(index),
      value_(value) {}

std::vector<double> finite_difference_gradient(const ScalarObjective& f,
                                               std::span<const double> theta, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("finite_difference_gradient: eps must be positive");
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double plus = f(point);
    if (!std::isfinite(plus)) throw NonFiniteObjective(i, plus);
    point[i] = saved - eps;
    const double minus = f(point);
    if (!std::isfinite(minus)) throw NonFiniteObjective(i, minus);
    point[i] = saved;
    grad[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
  if (analytic.size() != numeric.size()) {
    throw InvalidArgument("max_relative_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

}  // namespace rnnlab
