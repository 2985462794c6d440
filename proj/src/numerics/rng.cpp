#include "rnnlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace rnnlab {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  ++state_.counter;
  return mix64(state_.seed + state_.counter * kGamma);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split() { return Rng(next_u64()); }

Matrix bernoulli_mask(Rng& rng, std::size_t rows, std::size_t cols, double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw InvalidArgument("bernoulli_mask: keep_prob must be in (0, 1], got " +
                          std::to_string(keep_prob));
  }
  Matrix mask(rows, cols, 1.0);
  if (keep_prob == 1.0) return mask;
  const double scale = 1.0 / keep_prob;
  for (double& v : mask.data()) v = rng.uniform() < keep_prob ? scale : 0.0;
  return mask;
}

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace rnnlab
