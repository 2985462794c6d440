#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "rnnlab/data.hpp"
#include "rnnlab/evaluation.hpp"
#include "rnnlab/training.hpp"

namespace rnnlab {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw InvalidArgument("epochs must be at least 1");
  if (batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
  if (bptt == 0) throw InvalidArgument("bptt must be at least 1");
  if (valid_rows == 0) throw InvalidArgument("valid_rows must be at least 1");
  if (!(divergence_factor > 0.0)) throw InvalidArgument("divergence_factor must be positive");
  if (clip_norm < 0.0) throw InvalidArgument("clip_norm must be >= 0 (0 disables clipping)");
  if (time_budget_seconds < 0.0) throw InvalidArgument("time_budget_seconds must be >= 0");
  if (target_valid_bpc < 0.0) throw InvalidArgument("target_valid_bpc must be >= 0");
  RAdamState::init(ModelParams{}, optimizer);
}

std::string ValidationRecord::record() const {
  return "step=" + std::to_string(step) + " epoch=" + std::to_string(epoch) + " train_nats=" + fmt(train_loss) +
         " valid_nats=" + fmt(valid_loss) + " tta_valid_nats=" + fmt(tta_valid_loss) +
         " valid_bpc=" + fmt(valid_loss / std::numbers::ln2) +
         " tta_valid_bpc=" + fmt(tta_valid_loss / std::numbers::ln2) + " lr=" + fmt(learning_rate) +
         " restarts=" + std::to_string(restarts);
}

TrainResult train(const ModelConfig& model, const TrainConfig& config, std::span<const std::int32_t> train_stream,
                  std::span<const std::int32_t> valid_stream, std::uint64_t seed, const TrainHooks& hooks) {
  model.validate();
  config.validate();
  const BatchedStream rows = batchify(train_stream, config.batch_size);
  const std::size_t windows = window_count(rows, config.bptt);
  if (windows == 0) throw InvalidArgument("training stream is too short for batch_size " +
                                          std::to_string(config.batch_size));
  const auto started = std::chrono::steady_clock::now();

  Rng rng(seed);
  ModelParams params = init_model_params(rng, model);
  RAdamState optimizer = RAdamState::init(params, config.optimizer);
  TtaState tta;

  const auto valid_loss = [&](const ModelParams& p) {
    return evaluate_static(p, model, valid_stream, 1.0, config.valid_rows, config.bptt).nats_per_token;
  };

  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t restarts = 0;
  const auto snapshot = [&](const ModelParams& p, double loss) {
    Checkpoint c;
    c.model = model;
    c.params = p;
    c.optimizer = optimizer;
    c.tta = tta;
    c.rng = rng.state();
    c.best_valid_loss = loss;
    c.learning_rate = optimizer.lr;
    c.step = step;
    c.epoch = epoch;
    c.restarts = restarts;
    return c;
  };

  TrainResult result;
  const double initial_loss = valid_loss(params);
  result.best = snapshot(params, initial_loss);
  result.average = result.best;
  result.best_average_loss = initial_loss;

  double train_sum = 0.0;
  std::size_t train_count = 0;
  std::uint64_t last_validation = 0;
  std::size_t stale = 0;

  // Returns true when training should stop.
  const auto validate = [&]() {
    last_validation = step;
    const double raw = valid_loss(params);
    const TtaSelection sel = tta_evaluate_and_swap(tta, valid_loss, step);
    ValidationRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.train_loss = train_count ? train_sum / static_cast<double>(train_count)
                                 : std::numeric_limits<double>::quiet_NaN();
    rec.valid_loss = raw;
    rec.tta_valid_loss = sel.loss;
    rec.learning_rate = optimizer.lr;
    rec.restarts = restarts;
    result.records.push_back(rec);
    if (hooks.on_validation) hooks.on_validation(rec);
    train_sum = 0.0;
    train_count = 0;

    if (raw < result.best.best_valid_loss) result.best = snapshot(params, raw);
    if (sel.loss < result.best_average_loss) {
      result.best_average_loss = sel.loss;
      result.average = snapshot(sel.params, sel.loss);
      stale = 0;
    } else {
      ++stale;
    }
    if (config.target_valid_bpc > 0.0 && result.best_average_loss / std::numbers::ln2 <= config.target_valid_bpc) {
      result.stop_reason = "target_reached";
      return true;
    }
    if (config.patience > 0 && stale >= config.patience) {
      result.stop_reason = "patience";
      return true;
    }
    return false;
  };

  bool stop = false;
  for (std::uint64_t e = 1; e <= config.epochs && !stop; ++e) {
    epoch = e;
    ModelState state = zero_state(model, config.batch_size);
    for (std::size_t k = 0; k < windows && !stop; ++k) {
      const WindowBatch batch = window_at(rows, config.bptt, k);
      LossResult r = loss_multisample(params, model, batch, state, rng, model.dropout_samples, true);
      double loss = r.loss;
      if (hooks.after_loss) hooks.after_loss(step + 1, loss);
      bool diverged = !r.finite || !std::isfinite(loss) ||
                      loss > config.divergence_factor * result.best.best_valid_loss;
      if (!diverged) {
        clip_global_norm(r.grads, config.clip_norm);
        diverged = !radam_step(optimizer, params, r.grads).applied;
      }
      if (diverged) {
        if (restarts >= config.max_restarts) {
          throw TrainingDiverged("training diverged at step " + std::to_string(step + 1) + " after " +
                                 std::to_string(restarts) + " restarts (loss " + fmt(loss) + ")");
        }
        ++restarts;
        RestartEvent event;
        event.step = step + 1;
        event.trigger_loss = loss;
        event.lr_before = optimizer.lr;
        params = result.best.params;
        optimizer = result.best.optimizer;
        tta = result.best.tta;
        optimizer.lr = event.lr_before * 0.9;
        event.lr_after = optimizer.lr;
        event.restored_from = &result.best;
        event.params = &params;
        event.optimizer = &optimizer;
        if (hooks.on_restart) hooks.on_restart(event);
        state = zero_state(model, config.batch_size);
        continue;
      }

      state = std::move(r.final_state);
      ++step;
      tta_update(tta, params, step);
      train_sum += loss;
      ++train_count;

      if (config.validate_every > 0 && step % config.validate_every == 0) stop = validate();
      if (!stop && config.max_steps > 0 && step >= config.max_steps) {
        result.stop_reason = "max_steps";
        stop = true;
      }
      if (!stop && config.time_budget_seconds > 0.0) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        if (elapsed.count() >= config.time_budget_seconds) {
          result.stop_reason = "time_budget";
          stop = true;
        }
      }
    }
    if (!stop && config.validate_every == 0 && last_validation != step) stop = validate();
  }
  if (result.stop_reason.empty()) result.stop_reason = "epochs";
  if (step > 0 && last_validation != step) validate();
  result.steps = step;
  return result;
}

}  // namespace rnnlab
