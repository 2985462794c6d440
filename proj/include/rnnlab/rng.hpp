#pragma once

#include <cstdint>

#include "rnnlab/matrix.hpp"

namespace rnnlab {

/// Counter-based SplitMix64 generator.
///
/// The n-th output (n = 1, 2, ...) is mix(seed + n * 0x9E3779B97F4A7C15),
/// where mix is the SplitMix64 finalizer. The full state is the pair
/// (seed, counter), so a stream can be saved and resumed exactly on any
/// platform.
class Rng {
 public:
  struct State {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;
    friend bool operator==(const State&, const State&) = default;
  };

  explicit Rng(std::uint64_t seed = 0) : state_{seed, 0} {}
  explicit Rng(State state) : state_(state) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (consumes two draws).
  double normal();
  /// Independent generator derived from this one's next output.
  Rng split();

  State state() const { return state_; }

 private:
  State state_;
};

/// Inverted-dropout mask: entries are 0 or 1/keep_prob, each kept with
/// probability keep_prob. keep_prob must lie in (0, 1].
Matrix bernoulli_mask(Rng& rng, std::size_t rows, std::size_t cols, double keep_prob);

/// Fills a matrix with i.i.d. uniform draws from [lo, hi).
Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

}  // namespace rnnlab
