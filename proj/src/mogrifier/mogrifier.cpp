#include "rnnlab/mogrifier.hpp"

#include <cmath>
#include <string>

#include "rnnlab/activations.hpp"

namespace rnnlab {

Matrix RoundWeight::effective() const { return low_rank() ? gemm(left, right) : full; }

namespace {

// Odd rounds (0-based even index) map the state to an input gate.
bool gates_input(std::size_t index) { return index % 2 == 0; }

std::pair<std::size_t, std::size_t> round_shape(std::size_t index, std::size_t m,
                                                std::size_t n) {
  return gates_input(index) ? std::pair{n, m} : std::pair{m, n};
}

}  // namespace

MogrifierParams zero_mogrifier_params(std::size_t m, std::size_t n, std::size_t rounds,
                                      std::size_t rank) {
  MogrifierParams p{m, n, {}};
  for (std::size_t k = 0; k < rounds; ++k) {
    const auto [in, out] = round_shape(k, m, n);
    RoundWeight w;
    if (rank == 0) {
      w.full = Matrix(in, out);
    } else {
      w.left = Matrix(in, rank);
      w.right = Matrix(rank, out);
    }
    p.rounds.push_back(std::move(w));
  }
  return p;
}

MogrifierParams init_mogrifier_params(Rng& rng, std::size_t m, std::size_t n,
                                      std::size_t rounds, std::size_t rank) {
  MogrifierParams p = zero_mogrifier_params(m, n, rounds, rank);
  const double bound = 1.0 / std::sqrt(static_cast<double>(n));
  p.for_each([&](std::string_view, Matrix& w) {
    w = uniform_matrix(rng, w.rows(), w.cols(), -bound, bound);
  });
  return p;
}

MogrifierParams zeros_like(const MogrifierParams& p) {
  MogrifierParams out = p;
  out.for_each([](std::string_view, Matrix& w) { w.fill(0.0); });
  return out;
}

std::vector<Matrix> effective_matrices(const MogrifierParams& p) {
  std::vector<Matrix> out;
  out.reserve(p.rounds.size());
  for (const auto& w : p.rounds) out.push_back(w.effective());
  return out;
}

MogrifyResult mogrify_forward(std::span<const Matrix> effective, const Matrix& h,
                              const Matrix& x) {
  if (h.rows() != x.rows()) {
    throw InvalidArgument("mogrify: batch sizes differ (" + h.shape_string() + " vs " +
                          x.shape_string() + ")");
  }
  MogrifyResult result;
  MogrifyCache& cache = result.cache;
  cache.xs.push_back(x);
  cache.hs.push_back(h);
  for (std::size_t k = 0; k < effective.size(); ++k) {
    const Matrix& w = effective[k];
    const Matrix& source = gates_input(k) ? cache.hs.back() : cache.xs.back();
    const Matrix& target = gates_input(k) ? cache.xs.back() : cache.hs.back();
    if (w.rows() != source.cols() || w.cols() != target.cols()) {
      throw InvalidArgument("mogrify round " + std::to_string(k + 1) + ": weight " +
                            w.shape_string() + " does not map " + source.shape_string() +
                            " onto " + target.shape_string());
    }
    Matrix gate = gemm(source, w);
    sigmoid_inplace(gate);
    Matrix next = target;
    for (std::size_t e = 0; e < next.size(); ++e) next[e] *= 2.0 * gate[e];
    cache.gates.push_back(std::move(gate));
    (gates_input(k) ? cache.xs : cache.hs).push_back(std::move(next));
  }
  result.h = cache.hs.back();
  result.x = cache.xs.back();
  return result;
}

MogrifyResult mogrify_forward(const MogrifierParams& p, const Matrix& h, const Matrix& x) {
  if (h.cols() != p.state_size || x.cols() != p.input_size) {
    throw InvalidArgument("mogrify: expected h with " + std::to_string(p.state_size) +
                          " and x with " + std::to_string(p.input_size) + " columns");
  }
  const auto effective = effective_matrices(p);
  return mogrify_forward(effective, h, x);
}

void mogrify_backward(std::span<const Matrix> effective, const MogrifyCache& cache,
                      const Matrix& grad_h_out, const Matrix& grad_x_out,
                      std::span<Matrix> grad_effective, Matrix& grad_h, Matrix& grad_x) {
  if (cache.gates.size() != effective.size() || grad_effective.size() != effective.size()) {
    throw InvalidArgument("mogrify_backward: round count mismatch");
  }
  require_same_shape(grad_h_out, cache.hs.back(), "mogrify_backward grad_h");
  require_same_shape(grad_x_out, cache.xs.back(), "mogrify_backward grad_x");
  grad_h = grad_h_out;
  grad_x = grad_x_out;
  for (std::size_t k = effective.size(); k-- > 0;) {
    const Matrix& gate = cache.gates[k];
    const bool on_input = gates_input(k);
    // Output of round k is the newest entry of its ladder at this point.
    const Matrix& prev = on_input ? cache.xs[k / 2] : cache.hs[(k - 1) / 2];
    const Matrix& source = on_input ? cache.hs[k / 2] : cache.xs[(k + 1) / 2];
    Matrix& grad_out = on_input ? grad_x : grad_h;
    Matrix& grad_source = on_input ? grad_h : grad_x;

    Matrix d_pre(gate.rows(), gate.cols());
    for (std::size_t e = 0; e < d_pre.size(); ++e) {
      d_pre[e] = grad_out[e] * prev[e] * 2.0 * sigmoid_grad_from_value(gate[e]);
      grad_out[e] *= 2.0 * gate[e];
    }
    gemm_tn_acc(source, d_pre, grad_effective[k]);
    gemm_nt_acc(d_pre, effective[k], grad_source);
  }
}

void accumulate_factor_gradients(const MogrifierParams& p, std::span<const Matrix> grad_effective,
                                 MogrifierParams& grads) {
  for (std::size_t k = 0; k < p.rounds.size(); ++k) {
    const RoundWeight& w = p.rounds[k];
    RoundWeight& g = grads.rounds[k];
    if (w.low_rank()) {
      gemm_nt_acc(grad_effective[k], w.right, g.left);
      gemm_tn_acc(w.left, grad_effective[k], g.right);
    } else {
      add_inplace(g.full, grad_effective[k]);
    }
  }
}

MogrifyGradients mogrify_backward(const MogrifierParams& p, const MogrifyCache& cache,
                                  const Matrix& grad_h_out, const Matrix& grad_x_out) {
  const auto effective = effective_matrices(p);
  std::vector<Matrix> grad_effective;
  for (const auto& w : effective) grad_effective.emplace_back(w.rows(), w.cols());
  MogrifyGradients out{zeros_like(p), {}, {}};
  mogrify_backward(effective, cache, grad_h_out, grad_x_out, grad_effective, out.h, out.x);
  accumulate_factor_gradients(p, grad_effective, out.params);
  return out;
}

}  // namespace rnnlab
