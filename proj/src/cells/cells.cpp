#include "rnnlab/cells.hpp"

#include <cmath>
#include <string>

#include "rnnlab/activations.hpp"

namespace rnnlab {

std::string_view to_string(CellKind kind) {
  return kind == CellKind::lstm ? "lstm" : "rlstm";
}

CellKind parse_cell_kind(std::string_view text) {
  if (text == "lstm") return CellKind::lstm;
  if (text == "rlstm") return CellKind::rlstm;
  throw InvalidArgument("unknown cell kind '" + std::string(text) + "' (expected lstm|rlstm)");
}

CellKind kind_of(const CellParams& p) {
  return std::holds_alternative<LstmParams>(p) ? CellKind::lstm : CellKind::rlstm;
}

std::size_t input_size(const CellParams& p) {
  return std::visit([](const auto& cell) { return cell.input_size(); }, p);
}

std::size_t state_size(const CellParams& p) {
  return std::visit([](const auto& cell) { return cell.state_size(); }, p);
}

CellParams zeros_like(const CellParams& p) {
  CellParams out = p;
  for_each_tensor(out, [](std::string_view, Matrix& m) { m.fill(0.0); });
  return out;
}

CellParams zero_cell_params(CellKind kind, std::size_t m, std::size_t n) {
  if (kind == CellKind::lstm) {
    return LstmParams{Matrix(m, 4 * n), Matrix(n, 4 * n), Matrix(1, 4 * n)};
  }
  return RlstmParams{Matrix(m, 2 * n), Matrix(n, 2 * n), Matrix(1, 2 * n),
                     Matrix(n, n),     Matrix(n, n),     Matrix(1, n),
                     Matrix(n, n),     Matrix(1, n)};
}

namespace {

void check_step_inputs(std::size_t m, std::size_t n, const CellState& prev, const Matrix& x) {
  const std::size_t batch = x.rows();
  if (x.cols() != m || prev.c.rows() != batch || prev.h.rows() != batch || prev.c.cols() != n ||
      prev.h.cols() != n) {
    throw InvalidArgument("cell step: expected x " + std::to_string(batch) + "x" +
                          std::to_string(m) + " and state " + std::to_string(batch) + "x" +
                          std::to_string(n) + ", got x " + x.shape_string() + ", c " +
                          prev.c.shape_string() + ", h " + prev.h.shape_string());
  }
}

// Shared tail of both cells: c = f*c_prev + g*j with g = i or min(i, 1-f).
void update_memory(CellCache& k, bool capped) {
  const std::size_t size = k.i.size();
  k.c = Matrix(k.i.rows(), k.i.cols());
  k.input_branch.assign(size, 1);
  for (std::size_t e = 0; e < size; ++e) {
    double gate = k.i[e];
    if (capped) {
      const double cap = 1.0 - k.f[e];
      if (!(k.i[e] <= cap)) {
        gate = cap;
        k.input_branch[e] = 0;
      }
    }
    k.c[e] = k.f[e] * k.c_prev[e] + gate * k.j[e];
  }
}

double effective_input_gate(const CellCache& k, std::size_t e) {
  return k.input_branch[e] ? k.i[e] : 1.0 - k.f[e];
}

}  // namespace

CellStep lstm_forward(const LstmParams& p, const CellState& prev, const Matrix& x,
                      bool cap_input_gate) {
  const std::size_t m = p.input_size();
  const std::size_t n = p.state_size();
  check_step_inputs(m, n, prev, x);
  const std::size_t batch = x.rows();

  Matrix pre(batch, 4 * n);
  add_row_broadcast(pre, p.bias);
  gemm_acc(x, p.w_x, pre);
  gemm_acc(prev.h, p.w_h, pre);

  CellStep step;
  CellCache& k = step.cache;
  k.kind = CellKind::lstm;
  k.capped = cap_input_gate;
  k.x = x;
  k.h_prev = prev.h;
  k.c_prev = prev.c;
  k.i = Matrix(batch, n);
  k.j = Matrix(batch, n);
  k.f = Matrix(batch, n);
  k.o = Matrix(batch, n);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = pre.row(b);
    for (std::size_t u = 0; u < n; ++u) {
      k.i(b, u) = sigmoid(row[u]);
      k.j(b, u) = std::tanh(row[n + u]);
      k.f(b, u) = sigmoid(row[2 * n + u]);
      k.o(b, u) = sigmoid(row[3 * n + u]);
    }
  }
  update_memory(k, cap_input_gate);
  k.tanh_c = k.c;
  tanh_inplace(k.tanh_c);
  step.state.c = k.c;
  step.state.h = hadamard(k.o, k.tanh_c);
  return step;
}

CellStep rlstm_forward(const RlstmParams& p, const CellState& prev, const Matrix& x,
                       const Matrix& state_mask) {
  const std::size_t m = p.input_size();
  const std::size_t n = p.state_size();
  check_step_inputs(m, n, prev, x);
  const std::size_t batch = x.rows();
  if (!state_mask.empty() && (state_mask.rows() != batch || state_mask.cols() != n)) {
    throw InvalidArgument("rlstm_forward: state mask " + state_mask.shape_string() +
                          " for state " + prev.c.shape_string());
  }

  CellStep step;
  CellCache& k = step.cache;
  k.kind = CellKind::rlstm;
  k.capped = true;
  k.x = x;
  k.h_prev = prev.h;
  k.c_prev = prev.c;
  k.state_mask = state_mask;

  Matrix pre_ij(batch, 2 * n);
  add_row_broadcast(pre_ij, p.b_ij);
  gemm_acc(x, p.w_x, pre_ij);
  gemm_acc(prev.h, p.w_h, pre_ij);
  k.i = Matrix(batch, n);
  k.j = Matrix(batch, n);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = pre_ij.row(b);
    for (std::size_t u = 0; u < n; ++u) {
      k.i(b, u) = sigmoid(row[u]);
      k.j(b, u) = std::tanh(row[n + u]);
    }
  }

  // The forget gate depends on i and j, so it cannot share their product.
  k.u = hadamard(k.i, k.j);
  k.f = Matrix(batch, n);
  add_row_broadcast(k.f, p.b_f);
  gemm_acc(k.u, p.w_fu, k.f);
  gemm_acc(prev.h, p.w_fh, k.f);
  sigmoid_inplace(k.f);

  update_memory(k, true);

  k.masked_c = k.c;
  if (!state_mask.empty()) hadamard_inplace(k.masked_c, state_mask);
  k.o = Matrix(batch, n);
  add_row_broadcast(k.o, p.b_o);
  gemm_acc(k.masked_c, p.w_oc, k.o);
  sigmoid_inplace(k.o);

  k.tanh_c = k.c;
  tanh_inplace(k.tanh_c);
  step.state.c = k.c;
  step.state.h = hadamard(k.o, k.tanh_c);
  return step;
}

CellStep cell_forward(const CellParams& p, const CellState& prev, const Matrix& x,
                      bool cap_input_gate, const Matrix& state_mask) {
  if (const auto* lstm = std::get_if<LstmParams>(&p)) {
    return lstm_forward(*lstm, prev, x, cap_input_gate);
  }
  return rlstm_forward(std::get<RlstmParams>(p), prev, x, state_mask);
}

namespace {

void lstm_backward(const LstmParams& p, const CellCache& k, const Matrix& grad_c,
                   const Matrix& grad_h, LstmParams& g, Matrix& grad_c_prev, Matrix& grad_h_prev,
                   Matrix& grad_x) {
  const std::size_t batch = k.c.rows();
  const std::size_t n = k.c.cols();
  Matrix d_pre(batch, 4 * n);
  grad_c_prev = Matrix(batch, n);
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = d_pre.row(b);
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t e = b * n + u;
      const double tc = k.tanh_c[e];
      const double d_o = grad_h[e] * tc;
      const double dc = grad_c[e] + grad_h[e] * k.o[e] * tanh_grad_from_value(tc);
      grad_c_prev[e] = dc * k.f[e];
      double d_f = dc * k.c_prev[e];
      const double d_gate = dc * k.j[e];
      const double d_j = dc * effective_input_gate(k, e);
      double d_i = 0.0;
      if (k.input_branch[e]) {
        d_i = d_gate;
      } else {
        d_f -= d_gate;
      }
      row[u] = d_i * sigmoid_grad_from_value(k.i[e]);
      row[n + u] = d_j * tanh_grad_from_value(k.j[e]);
      row[2 * n + u] = d_f * sigmoid_grad_from_value(k.f[e]);
      row[3 * n + u] = d_o * sigmoid_grad_from_value(k.o[e]);
    }
  }
  gemm_tn_acc(k.x, d_pre, g.w_x);
  gemm_tn_acc(k.h_prev, d_pre, g.w_h);
  add_column_sums(d_pre, g.bias);
  grad_x = Matrix(batch, p.input_size());
  gemm_nt_acc(d_pre, p.w_x, grad_x);
  grad_h_prev = Matrix(batch, n);
  gemm_nt_acc(d_pre, p.w_h, grad_h_prev);
}

void rlstm_backward(const RlstmParams& p, const CellCache& k, const Matrix& grad_c,
                    const Matrix& grad_h, RlstmParams& g, Matrix& grad_c_prev,
                    Matrix& grad_h_prev, Matrix& grad_x) {
  const std::size_t batch = k.c.rows();
  const std::size_t n = k.c.cols();
  const bool masked = !k.state_mask.empty();

  Matrix d_pre_o(batch, n);
  for (std::size_t e = 0; e < d_pre_o.size(); ++e) {
    d_pre_o[e] = grad_h[e] * k.tanh_c[e] * sigmoid_grad_from_value(k.o[e]);
  }
  gemm_tn_acc(k.masked_c, d_pre_o, g.w_oc);
  add_column_sums(d_pre_o, g.b_o);
  Matrix d_masked_c(batch, n);
  gemm_nt_acc(d_pre_o, p.w_oc, d_masked_c);

  grad_c_prev = Matrix(batch, n);
  Matrix d_i(batch, n);
  Matrix d_j(batch, n);
  Matrix d_pre_f(batch, n);
  for (std::size_t e = 0; e < d_pre_f.size(); ++e) {
    double dc = grad_c[e] + grad_h[e] * k.o[e] * tanh_grad_from_value(k.tanh_c[e]);
    dc += masked ? d_masked_c[e] * k.state_mask[e] : d_masked_c[e];
    grad_c_prev[e] = dc * k.f[e];
    double d_f = dc * k.c_prev[e];
    const double d_gate = dc * k.j[e];
    d_j[e] = dc * effective_input_gate(k, e);
    if (k.input_branch[e]) {
      d_i[e] = d_gate;
    } else {
      d_f -= d_gate;
    }
    d_pre_f[e] = d_f * sigmoid_grad_from_value(k.f[e]);
  }
  gemm_tn_acc(k.u, d_pre_f, g.w_fu);
  gemm_tn_acc(k.h_prev, d_pre_f, g.w_fh);
  add_column_sums(d_pre_f, g.b_f);
  Matrix d_u(batch, n);
  gemm_nt_acc(d_pre_f, p.w_fu, d_u);
  grad_h_prev = Matrix(batch, n);
  gemm_nt_acc(d_pre_f, p.w_fh, grad_h_prev);

  Matrix d_pre_ij(batch, 2 * n);
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = d_pre_ij.row(b);
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t e = b * n + u;
      const double di = d_i[e] + d_u[e] * k.j[e];
      const double dj = d_j[e] + d_u[e] * k.i[e];
      row[u] = di * sigmoid_grad_from_value(k.i[e]);
      row[n + u] = dj * tanh_grad_from_value(k.j[e]);
    }
  }
  gemm_tn_acc(k.x, d_pre_ij, g.w_x);
  gemm_tn_acc(k.h_prev, d_pre_ij, g.w_h);
  add_column_sums(d_pre_ij, g.b_ij);
  grad_x = Matrix(batch, p.input_size());
  gemm_nt_acc(d_pre_ij, p.w_x, grad_x);
  gemm_nt_acc(d_pre_ij, p.w_h, grad_h_prev);
}

}  // namespace

void cell_backward(const CellParams& p, const CellCache& cache, const Matrix& grad_c,
                   const Matrix& grad_h, CellParams& param_grads, Matrix& grad_c_prev,
                   Matrix& grad_h_prev, Matrix& grad_x) {
  require_same_shape(grad_c, cache.c, "cell_backward grad_c");
  require_same_shape(grad_h, cache.c, "cell_backward grad_h");
  if (kind_of(p) != cache.kind || kind_of(param_grads) != cache.kind) {
    throw InvalidArgument("cell_backward: cache and parameter kinds differ");
  }
  if (const auto* lstm = std::get_if<LstmParams>(&p)) {
    lstm_backward(*lstm, cache, grad_c, grad_h, std::get<LstmParams>(param_grads), grad_c_prev,
                  grad_h_prev, grad_x);
  } else {
    rlstm_backward(std::get<RlstmParams>(p), cache, grad_c, grad_h,
                   std::get<RlstmParams>(param_grads), grad_c_prev, grad_h_prev, grad_x);
  }
}

CellGradients cell_backward(const CellParams& p, const CellCache& cache, const Matrix& grad_c,
                            const Matrix& grad_h) {
  CellGradients out{zeros_like(p), {}, {}, {}};
  cell_backward(p, cache, grad_c, grad_h, out.params, out.c_prev, out.h_prev, out.x);
  return out;
}

Matrix chrono_forget_bias(Rng& rng, std::size_t n, double t_max) {
  if (!(t_max > 2.0) || !std::isfinite(t_max)) {
    throw InvalidArgument("Chrono init needs t_max > 2 (the range U(1, t_max - 1) is empty), got " +
                          std::to_string(t_max));
  }
  Matrix bias(1, n);
  for (double& v : bias.data()) v = std::log(rng.uniform(1.0, t_max - 1.0));
  return bias;
}

CellParams init_cell_params(Rng& rng, std::size_t m, std::size_t n, CellKind kind,
                            double t_max) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(n));
  // Validate before drawing anything so a rejected call leaves rng untouched.
  if (!(t_max > 2.0) || !std::isfinite(t_max)) {
    throw InvalidArgument("Chrono init needs t_max > 2 (the range U(1, t_max - 1) is empty), got " +
                          std::to_string(t_max));
  }
  CellParams params = zero_cell_params(kind, m, n);
  for_each_tensor(params, [&](std::string_view name, Matrix& w) {
    if (name.starts_with("w_")) w = uniform_matrix(rng, w.rows(), w.cols(), -bound, bound);
  });
  const Matrix forget = chrono_forget_bias(rng, n, t_max);
  if (auto* lstm = std::get_if<LstmParams>(&params)) {
    for (std::size_t u = 0; u < n; ++u) lstm->bias[2 * n + u] = forget[u];
  } else {
    std::get<RlstmParams>(params).b_f = forget;
  }
  return params;
}

}  // namespace rnnlab
