#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

enum class CellKind { lstm, rlstm };

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view text);

/// LSTM weights with the four gates tiled column-wise as [i | j | f | o].
/// Weights are stored input-major: w_x is m x 4n, w_h is n x 4n.
struct LstmParams {
  Matrix w_x;
  Matrix w_h;
  Matrix bias;  // 1 x 4n

  std::size_t input_size() const { return w_x.rows(); }
  std::size_t state_size() const { return w_h.rows(); }

  template <class F>
  void for_each(F&& f) {
    f("w_x", w_x);
    f("w_h", w_h);
    f("bias", bias);
  }
  template <class F>
  void for_each(F&& f) const {
    f("w_x", w_x);
    f("w_h", w_h);
    f("bias", bias);
  }
};

/// Rewired LSTM weights. The forget gate reads the proposed update i*j
/// instead of x, and the output gate reads the new cell state only.
struct RlstmParams {
  Matrix w_x;   // m x 2n, tiled [i | j]
  Matrix w_h;   // n x 2n, tiled [i | j]
  Matrix b_ij;  // 1 x 2n
  Matrix w_fu;  // n x n, applied to i*j
  Matrix w_fh;  // n x n
  Matrix b_f;   // 1 x n
  Matrix w_oc;  // n x n, applied to the (state-masked) cell
  Matrix b_o;   // 1 x n

  std::size_t input_size() const { return w_x.rows(); }
  std::size_t state_size() const { return w_h.rows(); }

  template <class F>
  void for_each(F&& f) {
    f("w_x", w_x);
    f("w_h", w_h);
    f("b_ij", b_ij);
    f("w_fu", w_fu);
    f("w_fh", w_fh);
    f("b_f", b_f);
    f("w_oc", w_oc);
    f("b_o", b_o);
  }
  template <class F>
  void for_each(F&& f) const {
    f("w_x", w_x);
    f("w_h", w_h);
    f("b_ij", b_ij);
    f("w_fu", w_fu);
    f("w_fh", w_fh);
    f("b_f", b_f);
    f("w_oc", w_oc);
    f("b_o", b_o);
  }
};

using CellParams = std::variant<LstmParams, RlstmParams>;

CellKind kind_of(const CellParams& p);
std::size_t input_size(const CellParams& p);
std::size_t state_size(const CellParams& p);

template <class F>
void for_each_tensor(CellParams& p, F&& f) {
  std::visit([&](auto& cell) { cell.for_each(f); }, p);
}
template <class F>
void for_each_tensor(const CellParams& p, F&& f) {
  std::visit([&](const auto& cell) { cell.for_each(f); }, p);
}

CellParams zeros_like(const CellParams& p);
/// All-zero parameters of the given kind and sizes.
CellParams zero_cell_params(CellKind kind, std::size_t input_size, std::size_t state_size);

/// Recurrent pair for a batch: one row per sequence.
struct CellState {
  Matrix c;
  Matrix h;

  static CellState zeros(std::size_t batch, std::size_t n) {
    return {Matrix(batch, n), Matrix(batch, n)};
  }
};

/// Everything backward needs from one forward step.
struct CellCache {
  CellKind kind = CellKind::lstm;
  bool capped = false;
  Matrix x, h_prev, c_prev;
  Matrix i, j, f, o, c, tanh_c;
  Matrix u;           // RLSTM only: i * j
  Matrix masked_c;    // RLSTM only: c * state_mask (equals c without a mask)
  Matrix state_mask;  // RLSTM only; empty when absent
  // 1 where min(i, 1 - f) selected i (ties count as i).
  std::vector<std::uint8_t> input_branch;
};

struct CellStep {
  CellState state;
  CellCache cache;
};

/// One LSTM step. With `cap_input_gate` the effective input gate is
/// min(i, 1 - f), which keeps |c| <= 1 when it starts there.
CellStep lstm_forward(const LstmParams& p, const CellState& prev, const Matrix& x,
                      bool cap_input_gate);

/// One Rewired LSTM step. `state_mask` may be empty (treated as all ones);
/// when present it multiplies c inside the output gate only.
CellStep rlstm_forward(const RlstmParams& p, const CellState& prev, const Matrix& x,
                       const Matrix& state_mask = Matrix());

/// Dispatches on the parameter kind. `cap_input_gate` applies to LSTM only;
/// `state_mask` to RLSTM only.
CellStep cell_forward(const CellParams& p, const CellState& prev, const Matrix& x,
                      bool cap_input_gate, const Matrix& state_mask);

/// Gradients of a scalar loss given dL/dc and dL/dh for the step's outputs.
/// Parameter gradients are accumulated into `param_grads`; the input-side
/// gradients are overwritten.
void cell_backward(const CellParams& p, const CellCache& cache, const Matrix& grad_c,
                   const Matrix& grad_h, CellParams& param_grads, Matrix& grad_c_prev,
                   Matrix& grad_h_prev, Matrix& grad_x);

struct CellGradients {
  CellParams params;
  Matrix c_prev;
  Matrix h_prev;
  Matrix x;
};

CellGradients cell_backward(const CellParams& p, const CellCache& cache, const Matrix& grad_c,
                            const Matrix& grad_h);

/// Forget-gate bias draw: ln(U(1, t_max - 1)). Requires t_max > 2.
Matrix chrono_forget_bias(Rng& rng, std::size_t n, double t_max);

/// Weights uniform in [-1/sqrt(n), 1/sqrt(n)], forget bias by Chrono init,
/// other biases zero.
CellParams init_cell_params(Rng& rng, std::size_t input_size, std::size_t state_size,
                            CellKind kind, double t_max);

}  // namespace rnnlab
