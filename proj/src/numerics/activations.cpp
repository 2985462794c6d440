#include "rnnlab/activations.hpp"

#include <algorithm>
#include <limits>

namespace rnnlab {

void sigmoid_inplace(Matrix& m) {
  for (double& v : m.data()) v = sigmoid(v);
}

void tanh_inplace(Matrix& m) {
  for (double& v : m.data()) v = std::tanh(v);
}

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("softmax temperature must be positive and finite, got " +
                          std::to_string(temperature));
  }
}

}  // namespace

void log_softmax(std::span<const double> logits, double temperature, std::span<double> out) {
  check_temperature(temperature);
  if (logits.empty()) throw InvalidArgument("log_softmax: empty logits");
  if (out.size() != logits.size()) throw InvalidArgument("log_softmax: output size mismatch");
  const double inv_t = 1.0 / temperature;
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] * inv_t;
    peak = std::max(peak, out[i]);
  }
  double total = 0.0;
  for (double v : out) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);
  for (double& v : out) v -= log_norm;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  check_temperature(temperature);
  if (logits.empty()) throw InvalidArgument("softmax: empty logits");
  const double inv_t = 1.0 / temperature;
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : logits) peak = std::max(peak, v * inv_t);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] * inv_t - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("log_sum_exp: empty input");
  const double peak = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(peak)) return peak;
  double total = 0.0;
  for (double v : xs) total += std::exp(v - peak);
  return peak + std::log(total);
}

}  // namespace rnnlab
