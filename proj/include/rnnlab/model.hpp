#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rnnlab/cells.hpp"
#include "rnnlab/matrix.hpp"
#include "rnnlab/mogrifier.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

/// Architecture and regularisation settings. Input and state sizes are
/// both `hidden` so that layer outputs can be summed without projections.
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 128;
  std::size_t vocab = 0;
  CellKind cell = CellKind::rlstm;
  bool cap_input_gate = true;  // LSTM only; the RLSTM is always capped
  std::size_t mogrifier_rounds = 4;
  std::size_t mogrifier_rank = 0;  // 0 = dense round matrices
  double keep_input = 1.0;
  double keep_cell = 1.0;
  double keep_state = 1.0;
  double keep_output = 1.0;
  bool tie_embeddings = false;
  bool input_row_dropout = false;      // drop whole embedding rows instead of elements
  bool embedding_in_residual = false;  // add the embedded input to the residual sums
  std::size_t dropout_samples = 1;
  double chrono_t_max = 20.085536923187668;  // e^3

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

struct LayerParams {
  CellParams cell;
  MogrifierParams mogrifier;
};

struct ModelParams {
  Matrix embedding;      // V x n; row w is the embedding of token w
  Matrix output_untied;  // n x V; empty when the output is tied to `embedding`
  Matrix output_bias;    // 1 x V
  std::vector<LayerParams> layers;

  bool tied() const { return output_untied.empty(); }
  /// The n x V output projection. When tied it is built from `embedding`
  /// on every call; there is no second copy to fall out of sync.
  Matrix output_projection() const;
  double output_weight(std::size_t unit, std::size_t token) const {
    return tied() ? embedding(token, unit) : output_untied(unit, token);
  }

  template <class F>
  void for_each(F&& f) {
    for_each_impl(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    for_each_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void for_each_impl(Self& self, F& f) {
    f(std::string("embedding"), self.embedding);
    if (!self.tied()) f(std::string("output_embedding"), self.output_untied);
    f(std::string("output_bias"), self.output_bias);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      for_each_tensor(self.layers[l].cell, [&](std::string_view name, auto& m) {
        f(prefix + "cell." + std::string(name), m);
      });
      std::size_t index = 0;
      self.layers[l].mogrifier.for_each([&](std::string_view name, auto& m) {
        f(prefix + "mogrifier." + std::to_string(index++) + "." + std::string(name), m);
      });
    }
  }
};

ModelParams init_model_params(Rng& rng, const ModelConfig& config);
/// Parameters with every entry zero (same layout as init_model_params).
ModelParams zero_model_params(const ModelConfig& config);
ModelParams zeros_like(const ModelParams& p);

std::size_t parameter_count(const ModelParams& p);
/// Every tensor in for_each order.
std::vector<Matrix*> tensors(ModelParams& p);
std::vector<const Matrix*> tensors(const ModelParams& p);
/// Euclidean norm over every parameter.
double global_norm(const ModelParams& p);
std::vector<double> flatten(const ModelParams& p);
/// Overwrites every parameter from `values` (length must equal the count).
void assign(ModelParams& p, std::span<const double> values);

/// One draw of every dropout mask for a [batch x steps] window.
struct MaskSet {
  std::vector<Matrix> input;              // [t] batch x n
  std::vector<std::vector<Matrix>> cell;  // [t][l] batch x n
  std::vector<Matrix> state;              // [l] batch x n, shared by every t
  std::vector<Matrix> output;             // [t] batch x n

  std::size_t steps() const { return input.size(); }
  const Matrix& state_mask(std::size_t /*t*/, std::size_t l) const { return state[l]; }

  static MaskSet ones(std::size_t layers, std::size_t batch, std::size_t steps, std::size_t n);
};

MaskSet sample_masks(Rng& rng, const ModelConfig& config, std::size_t batch, std::size_t steps);

/// Token ids for one BPTT window, row-major [batch x steps].
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;

  std::int32_t input(std::size_t b, std::size_t t) const { return inputs[b * steps + t]; }
  std::int32_t target(std::size_t b, std::size_t t) const { return targets[b * steps + t]; }
};

/// Per-layer recurrent state carried across windows.
using ModelState = std::vector<CellState>;
ModelState zero_state(const ModelConfig& config, std::size_t batch);

struct LayerStepCache {
  MogrifyCache mogrify;
  CellCache cell;
};

struct WindowCache {
  std::vector<std::vector<LayerStepCache>> steps;  // [t][l]
  std::vector<Matrix> output_inputs;               // [t] masked residual sum
  std::vector<std::vector<Matrix>> mogrifier_weights;  // [l] effective round matrices
  Matrix output_projection;
  MaskSet masks;
  WindowBatch batch;
  double temperature = 1.0;
};

struct ForwardResult {
  std::vector<Matrix> log_probs;  // [t] batch x V
  ModelState final_state;
  WindowCache cache;  // empty unless requested
  bool finite = true;

  double log_prob(std::size_t b, std::size_t t, std::size_t token) const {
    return log_probs[t](b, token);
  }
};

ForwardResult forward_window(const ModelParams& params, const ModelConfig& config,
                             const WindowBatch& batch, const ModelState& initial,
                             const MaskSet& masks, double temperature = 1.0,
                             bool keep_cache = true);

/// Gradients of sum_{t,b,v} grad[t](b, v) * log_probs[t](b, v).
ModelParams backward_window(const ModelParams& params, const ModelConfig& config,
                            const ForwardResult& forward, std::span<const Matrix> grad_log_probs);

/// Same as backward_window for an upstream gradient that is non-zero only on
/// the target entries; `target_grads` is [batch x steps] row-major.
/// Gradients are accumulated into `grads`.
void backward_window_targets(const ModelParams& params, const ModelConfig& config,
                             const ForwardResult& forward, std::span<const double> target_grads,
                             ModelParams& grads);

struct LossResult {
  double loss = 0.0;  // nats per token
  ModelParams grads;  // empty layers when gradients were not requested
  ModelState final_state;
  bool finite = true;
  std::vector<double> token_log_likelihood;               // [batch x steps]
  std::vector<std::vector<double>> sample_log_likelihood;  // [d][batch x steps]
};

/// Negative mean over tokens of ln((1/D) sum_d p(target | masks_d)). Every
/// sample starts from `initial`; the returned final state is sample 0's.
LossResult loss_multisample(const ModelParams& params, const ModelConfig& config,
                            const WindowBatch& batch, const ModelState& initial, Rng& rng,
                            std::size_t samples, bool compute_grads = true);

/// Forward pass with every mask at its expectation (all ones).
ForwardResult predict_deterministic(const ModelParams& params, const ModelConfig& config,
                                    const WindowBatch& batch, const ModelState& initial,
                                    double temperature = 1.0);

}  // namespace rnnlab
