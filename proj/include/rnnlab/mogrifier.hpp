#pragma once

#include <span>
#include <vector>

#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

/// Weight of one mogrifier round, either dense or factorized as left * right.
///
/// Odd rounds gate the input from the state: the matrix is n x m and the
/// gate is 2 * sigmoid(h * Q). Even rounds gate the state from the input:
/// the matrix is m x n and the gate is 2 * sigmoid(x * R).
struct RoundWeight {
  Matrix full;   // used when not low rank
  Matrix left;   // in x k
  Matrix right;  // k x out

  bool low_rank() const { return full.empty(); }
  /// The dense matrix this round applies (computes left * right if factored).
  Matrix effective() const;
};

struct MogrifierParams {
  std::size_t input_size = 0;  // m
  std::size_t state_size = 0;  // n
  std::vector<RoundWeight> rounds;  // rounds[k] belongs to round k + 1

  std::size_t round_count() const { return rounds.size(); }

  template <class F>
  void for_each(F&& f) {
    for (auto& w : rounds) {
      if (w.low_rank()) {
        f("left", w.left);
        f("right", w.right);
      } else {
        f("full", w.full);
      }
    }
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& w : rounds) {
      if (w.low_rank()) {
        f("left", w.left);
        f("right", w.right);
      } else {
        f("full", w.full);
      }
    }
  }
};

MogrifierParams zeros_like(const MogrifierParams& p);
/// Zero weights: the mogrifier is then the identity map. rank 0 means dense.
MogrifierParams zero_mogrifier_params(std::size_t m, std::size_t n, std::size_t rounds,
                                      std::size_t rank = 0);
/// Uniform in [-1/sqrt(n), 1/sqrt(n)] for every dense matrix or factor.
MogrifierParams init_mogrifier_params(Rng& rng, std::size_t m, std::size_t n,
                                      std::size_t rounds, std::size_t rank = 0);

std::vector<Matrix> effective_matrices(const MogrifierParams& p);

/// The gating ladder of one call. xs holds x^-1, x^1, x^3, ... and hs holds
/// h^0, h^2, h^4, ...; gates[k] holds sigmoid(.) of round k + 1.
struct MogrifyCache {
  std::vector<Matrix> xs;
  std::vector<Matrix> hs;
  std::vector<Matrix> gates;
};

struct MogrifyResult {
  Matrix h;
  Matrix x;
  MogrifyCache cache;
};

/// Runs the rounds and returns (h^{2 floor(r/2)}, x^{2 floor((r+1)/2) - 1}).
MogrifyResult mogrify_forward(std::span<const Matrix> effective, const Matrix& h,
                              const Matrix& x);
MogrifyResult mogrify_forward(const MogrifierParams& p, const Matrix& h, const Matrix& x);

/// Backpropagates through the ladder. Gradients w.r.t. the effective round
/// matrices are accumulated into `grad_effective`.
void mogrify_backward(std::span<const Matrix> effective, const MogrifyCache& cache,
                      const Matrix& grad_h_out, const Matrix& grad_x_out,
                      std::span<Matrix> grad_effective, Matrix& grad_h, Matrix& grad_x);

/// Maps gradients of the effective matrices onto the stored parameters
/// (chain rule through left * right for factored rounds), accumulating.
void accumulate_factor_gradients(const MogrifierParams& p, std::span<const Matrix> grad_effective,
                                 MogrifierParams& grads);

struct MogrifyGradients {
  MogrifierParams params;
  Matrix h;
  Matrix x;
};

MogrifyGradients mogrify_backward(const MogrifierParams& p, const MogrifyCache& cache,
                                  const Matrix& grad_h_out, const Matrix& grad_x_out);

}  // namespace rnnlab
