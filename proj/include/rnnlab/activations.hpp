#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rnnlab/matrix.hpp"

namespace rnnlab {

inline double sigmoid(double x) {
  // Branching on sign keeps exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Derivative expressed through the activation value s = sigmoid(x).
inline double sigmoid_grad_from_value(double s) { return s * (1.0 - s); }
inline double sigmoid_grad(double x) { return sigmoid_grad_from_value(sigmoid(x)); }

/// Derivative expressed through the activation value t = tanh(x).
inline double tanh_grad_from_value(double t) { return 1.0 - t * t; }
inline double tanh_grad(double x) { return tanh_grad_from_value(std::tanh(x)); }

void sigmoid_inplace(Matrix& m);
void tanh_inplace(Matrix& m);

/// Temperature-scaled softmax: exp(l_i / T) / sum_j exp(l_j / T).
/// Throws InvalidArgument for T <= 0 or empty input.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// Stable log of the temperature-scaled softmax, written into `out`.
void log_softmax(std::span<const double> logits, double temperature, std::span<double> out);

/// ln(sum_i exp(x_i)). Throws InvalidArgument on empty input.
double log_sum_exp(std::span<const double> xs);

}  // namespace rnnlab
