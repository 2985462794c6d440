#include "rnnlab/model.hpp"

#include <cmath>

#include "rnnlab/activations.hpp"

namespace rnnlab {

namespace {

void check_keep(double keep, const char* name) {
  if (!(keep > 0.0 && keep <= 1.0)) {
    throw InvalidArgument(std::string(name) + " must be in (0, 1], got " + std::to_string(keep));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (layers < 1) throw InvalidArgument("layers must be >= 1");
  if (hidden < 1) throw InvalidArgument("hidden must be >= 1");
  if (vocab < 1) throw InvalidArgument("vocab must be >= 1");
  if (dropout_samples < 1) throw InvalidArgument("dropout_samples must be >= 1");
  if (mogrifier_rank > 0 && mogrifier_rounds == 0) {
    throw InvalidArgument("mogrifier_rank set without mogrifier rounds");
  }
  check_keep(keep_input, "keep_input");
  check_keep(keep_cell, "keep_cell");
  check_keep(keep_state, "keep_state");
  check_keep(keep_output, "keep_output");
  if (!(chrono_t_max > 2.0)) throw InvalidArgument("chrono_t_max must be > 2");
}

Matrix ModelParams::output_projection() const {
  return tied() ? transpose(embedding) : output_untied;
}

ModelParams zero_model_params(const ModelConfig& config) {
  config.validate();
  const std::size_t n = config.hidden;
  ModelParams p;
  p.embedding = Matrix(config.vocab, n);
  if (!config.tie_embeddings) p.output_untied = Matrix(n, config.vocab);
  p.output_bias = Matrix(1, config.vocab);
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.layers.push_back({zero_cell_params(config.cell, n, n),
                        zero_mogrifier_params(n, n, config.mogrifier_rounds,
                                              config.mogrifier_rank)});
  }
  return p;
}

ModelParams init_model_params(Rng& rng, const ModelConfig& config) {
  config.validate();
  const std::size_t n = config.hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(n));
  ModelParams p;
  p.embedding = uniform_matrix(rng, config.vocab, n, -bound, bound);
  if (!config.tie_embeddings) p.output_untied = uniform_matrix(rng, n, config.vocab, -bound, bound);
  p.output_bias = Matrix(1, config.vocab);
  for (std::size_t l = 0; l < config.layers; ++l) {
    CellParams cell = init_cell_params(rng, n, n, config.cell, config.chrono_t_max);
    MogrifierParams mog =
        init_mogrifier_params(rng, n, n, config.mogrifier_rounds, config.mogrifier_rank);
    p.layers.push_back({std::move(cell), std::move(mog)});
  }
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams out = p;
  out.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
  return out;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t count = 0;
  p.for_each([&](const std::string&, const Matrix& m) { count += m.size(); });
  return count;
}

std::vector<Matrix*> tensors(ModelParams& p) {
  std::vector<Matrix*> out;
  p.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> tensors(const ModelParams& p) {
  std::vector<const Matrix*> out;
  p.for_each([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

double global_norm(const ModelParams& p) {
  double s = 0.0;
  p.for_each([&](const std::string&, const Matrix& m) {
    for (double v : m.data()) s += v * v;
  });
  return std::sqrt(s);
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  out.reserve(parameter_count(p));
  p.for_each([&](const std::string&, const Matrix& m) {
    out.insert(out.end(), m.data().begin(), m.data().end());
  });
  return out;
}

void assign(ModelParams& p, std::span<const double> values) {
  if (values.size() != parameter_count(p)) {
    throw InvalidArgument("assign: expected " + std::to_string(parameter_count(p)) +
                          " values, got " + std::to_string(values.size()));
  }
  std::size_t offset = 0;
  p.for_each([&](const std::string&, Matrix& m) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), m.size(), m.data().begin());
    offset += m.size();
  });
}

MaskSet MaskSet::ones(std::size_t layers, std::size_t batch, std::size_t steps, std::size_t n) {
  MaskSet masks;
  const Matrix one(batch, n, 1.0);
  masks.input.assign(steps, one);
  masks.cell.assign(steps, std::vector<Matrix>(layers, one));
  masks.state.assign(layers, one);
  masks.output.assign(steps, one);
  return masks;
}

MaskSet sample_masks(Rng& rng, const ModelConfig& config, std::size_t batch, std::size_t steps) {
  config.validate();
  const std::size_t n = config.hidden;
  MaskSet masks;
  masks.state.reserve(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l) {
    masks.state.push_back(bernoulli_mask(rng, batch, n, config.keep_state));
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (config.input_row_dropout) {
      Matrix rows = bernoulli_mask(rng, batch, 1, config.keep_input);
      Matrix mask(batch, n);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t u = 0; u < n; ++u) mask(b, u) = rows(b, 0);
      masks.input.push_back(std::move(mask));
    } else {
      masks.input.push_back(bernoulli_mask(rng, batch, n, config.keep_input));
    }
    std::vector<Matrix> cell;
    cell.reserve(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
      cell.push_back(bernoulli_mask(rng, batch, n, config.keep_cell));
    }
    masks.cell.push_back(std::move(cell));
    masks.output.push_back(bernoulli_mask(rng, batch, n, config.keep_output));
  }
  return masks;
}

ModelState zero_state(const ModelConfig& config, std::size_t batch) {
  return ModelState(config.layers, CellState::zeros(batch, config.hidden));
}

namespace {

void check_window(const ModelParams& params, const ModelConfig& config, const WindowBatch& batch,
                  const ModelState& initial, const MaskSet& masks) {
  if (params.layers.size() != config.layers) {
    throw InvalidArgument("parameters have " + std::to_string(params.layers.size()) +
                          " layers, config says " + std::to_string(config.layers));
  }
  if (batch.inputs.size() != batch.batch * batch.steps ||
      batch.targets.size() != batch.batch * batch.steps) {
    throw InvalidArgument("window token arrays do not match batch x steps");
  }
  for (auto id : batch.inputs) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab) {
      throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(config.vocab));
    }
  }
  if (initial.size() != config.layers) throw InvalidArgument("initial state layer count");
  for (const auto& s : initial) {
    if (s.c.rows() != batch.batch || s.c.cols() != config.hidden || !s.c.same_shape(s.h)) {
      throw InvalidArgument("initial state shape " + s.c.shape_string() + " for batch " +
                            std::to_string(batch.batch));
    }
  }
  if (masks.steps() < batch.steps || masks.state.size() != config.layers) {
    throw InvalidArgument("mask set does not cover the window");
  }
}

}  // namespace

ForwardResult forward_window(const ModelParams& params, const ModelConfig& config,
                             const WindowBatch& batch, const ModelState& initial,
                             const MaskSet& masks, double temperature, bool keep_cache) {
  check_window(params, config, batch, initial, masks);
  const std::size_t n = config.hidden;
  const std::size_t B = batch.batch;
  const std::size_t L = config.layers;

  std::vector<std::vector<Matrix>> mog_weights;
  mog_weights.reserve(L);
  for (const auto& layer : params.layers) mog_weights.push_back(effective_matrices(layer.mogrifier));
  Matrix projection = params.output_projection();

  ForwardResult result;
  ModelState state = initial;
  result.log_probs.reserve(batch.steps);
  if (keep_cache) result.cache.steps.reserve(batch.steps);

  for (std::size_t t = 0; t < batch.steps; ++t) {
    Matrix embedded(B, n);
    for (std::size_t b = 0; b < B; ++b) {
      const auto source = params.embedding.row(static_cast<std::size_t>(batch.input(b, t)));
      const auto mask = masks.input[t].row(b);
      auto dest = embedded.row(b);
      for (std::size_t u = 0; u < n; ++u) dest[u] = source[u] * mask[u];
    }

    Matrix residual = config.embedding_in_residual ? embedded : Matrix(B, n);
    std::vector<LayerStepCache> layer_caches;
    if (keep_cache) layer_caches.reserve(L);
    for (std::size_t l = 0; l < L; ++l) {
      const Matrix& state_mask = masks.state_mask(t, l);
      const Matrix masked_h = hadamard(state[l].h, state_mask);
      MogrifyResult mog = mogrify_forward(mog_weights[l], masked_h, l == 0 ? embedded : residual);
      CellStep step = cell_forward(params.layers[l].cell, CellState{state[l].c, std::move(mog.h)},
                                   mog.x, config.cap_input_gate, state_mask);
      const Matrix dropped = hadamard(step.state.h, masks.cell[t][l]);
      add_inplace(residual, dropped);
      state[l] = std::move(step.state);
      if (keep_cache) layer_caches.push_back({std::move(mog.cache), std::move(step.cache)});
    }

    hadamard_inplace(residual, masks.output[t]);
    Matrix logits(B, config.vocab);
    add_row_broadcast(logits, params.output_bias);
    gemm_acc(residual, projection, logits);
    Matrix log_probs(B, config.vocab);
    for (std::size_t b = 0; b < B; ++b) log_softmax(logits.row(b), temperature, log_probs.row(b));
    if (!all_finite(log_probs)) result.finite = false;
    result.log_probs.push_back(std::move(log_probs));

    if (keep_cache) {
      result.cache.steps.push_back(std::move(layer_caches));
      result.cache.output_inputs.push_back(std::move(residual));
    }
  }

  result.final_state = std::move(state);
  if (keep_cache) {
    result.cache.mogrifier_weights = std::move(mog_weights);
    result.cache.output_projection = std::move(projection);
    result.cache.masks = masks;
    result.cache.batch = batch;
    result.cache.temperature = temperature;
  }
  return result;
}

namespace {

using LogitGradFn = std::function<void(std::size_t t, Matrix& grad_logits)>;

void backward_impl(const ModelParams& params, const ModelConfig& config,
                   const ForwardResult& forward, const LogitGradFn& logit_grad,
                   ModelParams& grads) {
  const WindowCache& cache = forward.cache;
  if (cache.steps.size() != forward.log_probs.size()) {
    throw InvalidArgument("backward_window: forward pass was run without a cache");
  }
  const std::size_t n = config.hidden;
  const std::size_t L = config.layers;
  const std::size_t B = cache.batch.batch;
  const MaskSet& masks = cache.masks;

  std::vector<std::vector<Matrix>> grad_mog(L);
  for (std::size_t l = 0; l < L; ++l) {
    for (const auto& w : cache.mogrifier_weights[l]) grad_mog[l].emplace_back(w.rows(), w.cols());
  }
  Matrix grad_projection(n, config.vocab);
  std::vector<Matrix> grad_h_carry(L, Matrix(B, n));
  std::vector<Matrix> grad_c_carry(L, Matrix(B, n));
  Matrix grad_logits(B, config.vocab);
  Matrix grad_c_prev, grad_h_mog, grad_x_mog, grad_h_masked, grad_input;

  for (std::size_t t = cache.steps.size(); t-- > 0;) {
    grad_logits.fill(0.0);
    logit_grad(t, grad_logits);
    gemm_tn_acc(cache.output_inputs[t], grad_logits, grad_projection);
    add_column_sums(grad_logits, grads.output_bias);

    // Gradient w.r.t. the running residual sum; starts at the output.
    Matrix grad_residual(B, n);
    gemm_nt_acc(grad_logits, cache.output_projection, grad_residual);
    hadamard_inplace(grad_residual, masks.output[t]);

    Matrix grad_embedded(B, n);
    for (std::size_t l = L; l-- > 0;) {
      const LayerStepCache& step = cache.steps[t][l];
      Matrix grad_h = hadamard(grad_residual, masks.cell[t][l]);
      add_inplace(grad_h, grad_h_carry[l]);
      cell_backward(params.layers[l].cell, step.cell, grad_c_carry[l], grad_h,
                    grads.layers[l].cell, grad_c_prev, grad_h_mog, grad_x_mog);
      mogrify_backward(cache.mogrifier_weights[l], step.mogrify, grad_h_mog, grad_x_mog,
                       grad_mog[l], grad_h_masked, grad_input);
      hadamard_inplace(grad_h_masked, masks.state_mask(t, l));
      grad_h_carry[l] = std::move(grad_h_masked);
      grad_c_carry[l] = std::move(grad_c_prev);
      if (l == 0) {
        add_inplace(grad_embedded, grad_input);
      } else {
        add_inplace(grad_residual, grad_input);
      }
    }
    if (config.embedding_in_residual) add_inplace(grad_embedded, grad_residual);

    hadamard_inplace(grad_embedded, masks.input[t]);
    for (std::size_t b = 0; b < B; ++b) {
      auto dest = grads.embedding.row(static_cast<std::size_t>(cache.batch.input(b, t)));
      const auto source = grad_embedded.row(b);
      for (std::size_t u = 0; u < n; ++u) dest[u] += source[u];
    }
  }

  for (std::size_t l = 0; l < L; ++l) {
    accumulate_factor_gradients(params.layers[l].mogrifier, grad_mog[l], grads.layers[l].mogrifier);
  }
  if (grads.tied()) {
    // Tied: the output side contributes to the same embedding matrix.
    for (std::size_t v = 0; v < config.vocab; ++v)
      for (std::size_t u = 0; u < n; ++u) grads.embedding(v, u) += grad_projection(u, v);
  } else {
    add_inplace(grads.output_untied, grad_projection);
  }
}

}  // namespace

ModelParams backward_window(const ModelParams& params, const ModelConfig& config,
                            const ForwardResult& forward, std::span<const Matrix> grad_log_probs) {
  if (grad_log_probs.size() != forward.log_probs.size()) {
    throw InvalidArgument("backward_window: gradient has wrong number of steps");
  }
  const double inv_t = 1.0 / forward.cache.temperature;
  ModelParams grads = zeros_like(params);
  backward_impl(
      params, config, forward,
      [&](std::size_t t, Matrix& grad_logits) {
        const Matrix& lp = forward.log_probs[t];
        const Matrix& g = grad_log_probs[t];
        require_same_shape(g, lp, "backward_window grad");
        for (std::size_t b = 0; b < lp.rows(); ++b) {
          double total = 0.0;
          for (std::size_t v = 0; v < lp.cols(); ++v) total += g(b, v);
          for (std::size_t v = 0; v < lp.cols(); ++v) {
            grad_logits(b, v) = (g(b, v) - std::exp(lp(b, v)) * total) * inv_t;
          }
        }
      },
      grads);
  return grads;
}

void backward_window_targets(const ModelParams& params, const ModelConfig& config,
                             const ForwardResult& forward, std::span<const double> target_grads,
                             ModelParams& grads) {
  const WindowBatch& batch = forward.cache.batch;
  if (target_grads.size() != batch.batch * batch.steps) {
    throw InvalidArgument("backward_window_targets: expected batch x steps gradients");
  }
  const double inv_t = 1.0 / forward.cache.temperature;
  backward_impl(
      params, config, forward,
      [&](std::size_t t, Matrix& grad_logits) {
        const Matrix& lp = forward.log_probs[t];
        for (std::size_t b = 0; b < lp.rows(); ++b) {
          const double g = target_grads[b * batch.steps + t];
          if (g == 0.0) continue;
          for (std::size_t v = 0; v < lp.cols(); ++v) {
            grad_logits(b, v) = -g * std::exp(lp(b, v)) * inv_t;
          }
          grad_logits(b, static_cast<std::size_t>(batch.target(b, t))) += g * inv_t;
        }
      },
      grads);
}

LossResult loss_multisample(const ModelParams& params, const ModelConfig& config,
                            const WindowBatch& batch, const ModelState& initial, Rng& rng,
                            std::size_t samples, bool compute_grads) {
  if (samples < 1) throw InvalidArgument("loss_multisample: need at least one dropout sample");
  const std::size_t tokens = batch.batch * batch.steps;
  if (tokens == 0) throw InvalidArgument("loss_multisample: empty window");

  LossResult result;
  std::vector<ForwardResult> forwards;
  forwards.reserve(samples);
  result.sample_log_likelihood.assign(samples, std::vector<double>(tokens));
  for (std::size_t d = 0; d < samples; ++d) {
    const MaskSet masks = sample_masks(rng, config, batch.batch, batch.steps);
    forwards.push_back(forward_window(params, config, batch, initial, masks, 1.0, compute_grads));
    const ForwardResult& fwd = forwards.back();
    if (!fwd.finite) result.finite = false;
    for (std::size_t b = 0; b < batch.batch; ++b)
      for (std::size_t t = 0; t < batch.steps; ++t)
        result.sample_log_likelihood[d][b * batch.steps + t] =
            fwd.log_prob(b, t, static_cast<std::size_t>(batch.target(b, t)));
  }

  const double log_samples = std::log(static_cast<double>(samples));
  result.token_log_likelihood.assign(tokens, 0.0);
  std::vector<double> per_sample(samples);
  double total = 0.0;
  for (std::size_t t = 0; t < batch.steps; ++t) {
    for (std::size_t b = 0; b < batch.batch; ++b) {
      const std::size_t k = b * batch.steps + t;
      for (std::size_t d = 0; d < samples; ++d) per_sample[d] = result.sample_log_likelihood[d][k];
      const double ll = log_sum_exp(per_sample) - log_samples;
      result.token_log_likelihood[k] = ll;
      total += ll;
    }
  }
  result.loss = -total / static_cast<double>(tokens);
  if (!std::isfinite(result.loss)) result.finite = false;
  result.final_state = forwards.front().final_state;

  if (compute_grads) {
    result.grads = zeros_like(params);
    if (result.finite) {
      std::vector<double> target_grads(tokens);
      const double scale = 1.0 / static_cast<double>(tokens);
      for (std::size_t d = 0; d < samples; ++d) {
        // d(-loss)/d(log p_d) is the posterior weight of sample d over N.
        for (std::size_t k = 0; k < tokens; ++k) {
          const double posterior =
              std::exp(result.sample_log_likelihood[d][k] - log_samples -
                       result.token_log_likelihood[k]);
          target_grads[k] = -posterior * scale;
        }
        backward_window_targets(params, config, forwards[d], target_grads, result.grads);
      }
    }
  }
  return result;
}

ForwardResult predict_deterministic(const ModelParams& params, const ModelConfig& config,
                                    const WindowBatch& batch, const ModelState& initial,
                                    double temperature) {
  const MaskSet masks = MaskSet::ones(config.layers, batch.batch, batch.steps, config.hidden);
  return forward_window(params, config, batch, initial, masks, temperature, false);
}

}  // namespace rnnlab
