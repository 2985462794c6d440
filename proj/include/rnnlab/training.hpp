#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnnlab/model.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

struct RAdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RAdamState {
  std::uint64_t step = 0;
  ModelParams m;
  ModelParams v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;

  static RAdamState init(const ModelParams& like, const RAdamConfig& config);
};

/// rho_inf = 2 / (1 - beta2) - 1.
double radam_rho_infinity(double beta2);
/// rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t).
double radam_rho(std::uint64_t t, double beta2);

struct RAdamStepInfo {
  bool applied = false;    // false when the gradient was not finite
  bool rectified = false;  // adaptive branch (rho_t > 4)
  double rho = 0.0;
};

RAdamStepInfo radam_step(RAdamState& state, ModelParams& params, const ModelParams& grads);

/// Rescales grads so their global norm is at most max_norm (no-op when
/// max_norm <= 0). Returns the norm before clipping.
double clip_global_norm(ModelParams& grads, double max_norm);

struct TtaTail {
  ModelParams mean;  // empty while count == 0
  std::uint64_t start = 0;
  std::uint64_t count = 0;
};

struct TtaState {
  TtaTail long_tail;
  TtaTail short_tail;
};

/// Adds the iterate produced at `step` to both tails.
void tta_update(TtaState& state, const ModelParams& params, std::uint64_t step);

struct TtaSelection {
  ModelParams params;
  double loss = 0.0;
  double long_loss = 0.0;
  double short_loss = 0.0;  // equals long_loss when the short tail is empty
  bool swapped = false;
};

/// Evaluates both tail means. When the short tail is at least as good it
/// becomes the long tail and a new empty short tail starts at `step`.
TtaSelection tta_evaluate_and_swap(TtaState& state, const std::function<double(const ModelParams&)>& loss_fn,
                                   std::uint64_t step);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig model;
  ModelParams params;
  RAdamState optimizer;
  TtaState tta;
  Rng::State rng;
  double best_valid_loss = 0.0;
  double learning_rate = 0.0;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t restarts = 0;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws CheckpointError on corrupt input or an unsupported version.
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::size_t bptt = 128;
  RAdamConfig optimizer;
  double clip_norm = 10.0;
  double divergence_factor = 3.0;
  std::size_t max_restarts = 20;
  std::size_t validate_every = 0;  // steps; 0 = once per epoch
  std::size_t patience = 0;        // validations without improvement; 0 = never stop early
  std::size_t valid_rows = 1;
  std::size_t max_steps = 0;            // 0 = no limit
  double time_budget_seconds = 0.0;     // 0 = no limit
  double target_valid_bpc = 0.0;        // stop once the averaged model reaches it; 0 = off

  void validate() const;
};

struct ValidationRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double train_loss = 0.0;  // mean over the steps since the previous record
  double valid_loss = 0.0;  // current weights
  double tta_valid_loss = 0.0;  // best tail average
  double learning_rate = 0.0;
  std::uint64_t restarts = 0;

  std::string record() const;
};

struct RestartEvent {
  std::uint64_t step = 0;
  double trigger_loss = 0.0;
  double lr_before = 0.0;
  double lr_after = 0.0;
  const Checkpoint* restored_from = nullptr;
  const ModelParams* params = nullptr;     // after restoration
  const RAdamState* optimizer = nullptr;   // after restoration
};

struct TrainHooks {
  /// May overwrite the training loss of a step before the divergence test.
  std::function<void(std::uint64_t step, double& loss)> after_loss;
  std::function<void(const ValidationRecord&)> on_validation;
  std::function<void(const RestartEvent&)> on_restart;
};

struct TrainResult {
  Checkpoint best;     // weights with the best validation loss, plus optimizer state
  Checkpoint average;  // best tail-averaged weights
  double best_average_loss = 0.0;
  std::vector<ValidationRecord> records;
  std::uint64_t steps = 0;
  std::string stop_reason;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Epoch loop over contiguous BPTT windows. Throws TrainingDiverged after
/// more than max_restarts restarts.
TrainResult train(const ModelConfig& model, const TrainConfig& config, std::span<const std::int32_t> train_stream,
                  std::span<const std::int32_t> valid_stream, std::uint64_t seed, const TrainHooks& hooks = {});

}  // namespace rnnlab
