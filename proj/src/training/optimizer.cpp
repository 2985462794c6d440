#include <cmath>

#include "rnnlab/training.hpp"

namespace rnnlab {

RAdamState RAdamState::init(const ModelParams& like, const RAdamConfig& config) {
  if (!(config.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw InvalidArgument("RAdam betas must lie in [0, 1)");
  }
  if (!(config.eps > 0.0)) throw InvalidArgument("RAdam epsilon must be positive");
  RAdamState s;
  s.m = zeros_like(like);
  s.v = zeros_like(like);
  s.beta1 = config.beta1;
  s.beta2 = config.beta2;
  s.eps = config.eps;
  s.lr = config.lr;
  return s;
}

double radam_rho_infinity(double beta2) { return 2.0 / (1.0 - beta2) - 1.0; }

double radam_rho(std::uint64_t t, double beta2) {
  const double bt = std::pow(beta2, static_cast<double>(t));
  return radam_rho_infinity(beta2) - 2.0 * static_cast<double>(t) * bt / (1.0 - bt);
}

RAdamStepInfo radam_step(RAdamState& state, ModelParams& params, const ModelParams& grads) {
  const std::vector<Matrix*> p = tensors(params);
  const std::vector<const Matrix*> g = tensors(grads);
  const std::vector<Matrix*> m = tensors(state.m);
  const std::vector<Matrix*> v = tensors(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw InvalidArgument("radam_step: parameter layouts differ");
  }
  for (std::size_t n = 0; n < p.size(); ++n) {
    require_same_shape(*p[n], *g[n], "radam_step");
    require_same_shape(*p[n], *m[n], "radam_step");
    if (!all_finite(*g[n])) return {};
  }

  RAdamStepInfo info;
  info.applied = true;
  const std::uint64_t t = ++state.step;
  const double td = static_cast<double>(t);
  const double bias1 = 1.0 - std::pow(state.beta1, td);
  const double bias2 = 1.0 - std::pow(state.beta2, td);
  const double rho_inf = radam_rho_infinity(state.beta2);
  info.rho = radam_rho(t, state.beta2);
  info.rectified = info.rho > 4.0;
  const double r = info.rectified ? std::sqrt((info.rho - 4.0) * (info.rho - 2.0) * rho_inf /
                                              ((rho_inf - 4.0) * (rho_inf - 2.0) * info.rho))
                                  : 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    Matrix& w = *p[n];
    Matrix& mm = *m[n];
    Matrix& vv = *v[n];
    const Matrix& gg = *g[n];
    for (std::size_t i = 0; i < w.size(); ++i) {
      mm[i] = state.beta1 * mm[i] + (1.0 - state.beta1) * gg[i];
      vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * gg[i] * gg[i];
      const double m_hat = mm[i] / bias1;
      if (info.rectified) {
        const double v_hat = vv[i] / bias2;
        w[i] -= state.lr * r * m_hat / (std::sqrt(v_hat) + state.eps);
      } else {
        w[i] -= state.lr * m_hat;
      }
    }
  }
  return info;
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([&](const std::string&, Matrix& m) {
      for (double& x : m.data()) x *= scale;
    });
  }
  return norm;
}

void tta_update(TtaState& state, const ModelParams& params, std::uint64_t step) {
  for (TtaTail* tail : {&state.long_tail, &state.short_tail}) {
    if (tail->count == 0) {
      tail->mean = params;
      tail->start = step;
      tail->count = 1;
      continue;
    }
    ++tail->count;
    const double inv = 1.0 / static_cast<double>(tail->count);
    const std::vector<Matrix*> mean = tensors(tail->mean);
    const std::vector<const Matrix*> x = tensors(params);
    if (mean.size() != x.size()) throw InvalidArgument("tta_update: parameter layouts differ");
    for (std::size_t n = 0; n < mean.size(); ++n) {
      require_same_shape(*mean[n], *x[n], "tta_update");
      Matrix& mu = *mean[n];
      for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += ((*x[n])[i] - mu[i]) * inv;
    }
  }
}

TtaSelection tta_evaluate_and_swap(TtaState& state, const std::function<double(const ModelParams&)>& loss_fn,
                                   std::uint64_t step) {
  if (state.long_tail.count == 0) throw InvalidArgument("tta_evaluate_and_swap: the long tail is empty");
  TtaSelection sel;
  sel.long_loss = loss_fn(state.long_tail.mean);
  if (state.short_tail.count == 0) {
    sel.short_loss = sel.long_loss;
    sel.params = state.long_tail.mean;
    sel.loss = sel.long_loss;
    return sel;
  }
  sel.short_loss = loss_fn(state.short_tail.mean);
  if (sel.short_loss <= sel.long_loss) {
    sel.params = state.short_tail.mean;
    sel.loss = sel.short_loss;
    sel.swapped = true;
    state.long_tail = std::move(state.short_tail);
    state.short_tail = TtaTail{ModelParams{}, step, 0};
  } else {
    sel.params = state.long_tail.mean;
    sel.loss = sel.long_loss;
  }
  return sel;
}

}  // namespace rnnlab
