#include "rnnlab/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <utility>

#include "rnnlab/data.hpp"

namespace rnnlab {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void require_stream(std::span<const std::int32_t> stream, std::size_t rows, const char* who) {
  if (stream.size() < 2) throw InvalidArgument(std::string(who) + ": stream needs at least two tokens");
  if (rows == 0 || stream.size() / rows < 2) {
    throw InvalidArgument(std::string(who) + ": stream too short for " + std::to_string(rows) + " rows");
  }
}

}  // namespace

Metrics convert_metrics(double nats_per_token) {
  if (!std::isfinite(nats_per_token)) throw InvalidArgument("convert_metrics: non-finite input");
  return {std::exp(nats_per_token), nats_per_token / std::numbers::ln2};
}

std::string to_string(GradNorm mode) { return mode == GradNorm::none ? "none" : "global-norm"; }

GradNorm parse_grad_norm(std::string_view text) {
  if (text == "none") return GradNorm::none;
  if (text == "global-norm") return GradNorm::global_norm;
  throw InvalidArgument("unknown gradient normalization '" + std::string(text) + "' (none or global-norm)");
}

void DynevalConfig::validate() const {
  if (segment == 0) throw InvalidArgument("dyneval segment length must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("dyneval learning rate must be >= 0");
  if (!(decay >= 0.0 && decay < 1.0)) throw InvalidArgument("dyneval decay must be in [0, 1)");
  if (norm == GradNorm::global_norm && !(max_norm > 0.0)) {
    throw InvalidArgument("dyneval max_norm must be positive");
  }
}

EvalReport make_report(double total_nats, std::size_t tokens, double temperature) {
  EvalReport r;
  r.total_nats = total_nats;
  r.tokens = tokens;
  r.temperature = temperature;
  r.nats_per_token = tokens ? total_nats / static_cast<double>(tokens) : 0.0;
  if (std::isfinite(r.nats_per_token)) {
    const Metrics m = convert_metrics(r.nats_per_token);
    r.perplexity = m.perplexity;
    r.bpc = m.bpc;
  } else {
    r.perplexity = r.bpc = r.nats_per_token;
  }
  return r;
}

std::string EvalReport::record() const {
  std::string out = "tokens=" + std::to_string(tokens) + " total_nats=" + fmt(total_nats) +
                    " nats_per_token=" + fmt(nats_per_token) + " perplexity=" + fmt(perplexity) +
                    " bpc=" + fmt(bpc) + " temperature=" + fmt(temperature);
  out += std::string(" complete=") + (complete ? "true" : "false");
  return out;
}

EvalReport evaluate_static(const ModelParams& params, const ModelConfig& config,
                           std::span<const std::int32_t> stream, double temperature, std::size_t rows,
                           std::size_t window) {
  require_stream(stream, rows, "evaluate_static");
  if (!(temperature > 0.0)) throw InvalidArgument("evaluate_static: temperature must be positive");
  const BatchedStream batched = batchify(stream, rows);
  ModelState state = zero_state(config, rows);
  double total = 0.0;
  std::size_t tokens = 0;
  const std::size_t count = window_count(batched, window);
  for (std::size_t k = 0; k < count; ++k) {
    const WindowBatch batch = window_at(batched, window, k);
    ForwardResult fwd = predict_deterministic(params, config, batch, state, temperature);
    for (std::size_t t = 0; t < batch.steps; ++t)
      for (std::size_t b = 0; b < batch.batch; ++b)
        total -= fwd.log_prob(b, t, static_cast<std::size_t>(batch.target(b, t)));
    tokens += batch.batch * batch.steps;
    state = std::move(fwd.final_state);
  }
  return make_report(total, tokens, temperature);
}

std::vector<double> default_temperature_grid() {
  std::vector<double> grid;
  for (int k = 70; k <= 130; k += 2) grid.push_back(k / 100.0);
  return grid;
}

TemperatureSearch tune_temperature(const ModelParams& params, const ModelConfig& config,
                                   std::span<const std::int32_t> stream, std::span<const double> grid,
                                   std::size_t rows, std::size_t window) {
  if (grid.empty()) throw InvalidArgument("tune_temperature: empty grid");
  for (double t : grid)
    if (!(t > 0.0)) throw InvalidArgument("tune_temperature: temperatures must be positive");
  TemperatureSearch search;
  search.grid.assign(grid.begin(), grid.end());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double nll = evaluate_static(params, config, stream, grid[i], rows, window).nats_per_token;
    search.nats_per_token.push_back(nll);
    if (i == 0) continue;
    const double incumbent = search.nats_per_token[best];
    const double d_new = std::abs(grid[i] - 1.0);
    const double d_old = std::abs(grid[best] - 1.0);
    if (nll < incumbent || (nll == incumbent && (d_new < d_old || (d_new == d_old && grid[i] < grid[best])))) {
      best = i;
    }
  }
  search.best = grid[best];
  return search;
}

EvalReport evaluate_dynamic(const ModelParams& params, const ModelConfig& config,
                            std::span<const std::int32_t> stream, const DynevalConfig& dcfg,
                            double temperature, const DynevalObserver& observer) {
  dcfg.validate();
  require_stream(stream, 1, "evaluate_dynamic");
  if (!(temperature > 0.0)) throw InvalidArgument("evaluate_dynamic: temperature must be positive");

  const BatchedStream batched = batchify(stream, 1);
  ModelParams theta = params;
  ModelState state = zero_state(config, 1);
  double total = 0.0;
  std::size_t tokens = 0;
  bool complete = true;
  const std::size_t count = window_count(batched, dcfg.segment);
  for (std::size_t k = 0; k < count && complete; ++k) {
    const WindowBatch batch = window_at(batched, dcfg.segment, k);
    const MaskSet masks = MaskSet::ones(config.layers, 1, batch.steps, config.hidden);
    ForwardResult fwd = forward_window(theta, config, batch, state, masks, temperature, true);
    double segment_total = 0.0;
    for (std::size_t t = 0; t < batch.steps; ++t) {
      const double lp = fwd.log_prob(0, t, static_cast<std::size_t>(batch.target(0, t)));
      total -= lp;
      segment_total -= lp;
    }
    tokens += batch.steps;
    if (observer) observer({DynevalEvent::Kind::scored, k});
    if (!std::isfinite(segment_total)) {
      complete = false;
      break;
    }

    ModelParams grads = zeros_like(theta);
    const std::vector<double> target_grads(batch.steps, -1.0 / static_cast<double>(batch.steps));
    backward_window_targets(theta, config, fwd, target_grads, grads);
    double scale = 1.0;
    if (dcfg.norm == GradNorm::global_norm) {
      const double norm = global_norm(grads);
      if (norm > dcfg.max_norm) scale = dcfg.max_norm / norm;
    }
    bool finite = true;
    const std::vector<Matrix*> fast = tensors(theta);
    const std::vector<const Matrix*> slow = tensors(params);
    const std::vector<const Matrix*> g = tensors(std::as_const(grads));
    for (std::size_t n = 0; n < fast.size(); ++n) {
      Matrix& w = *fast[n];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double step = scale == 1.0 ? (*g[n])[i] : (*g[n])[i] * scale;
        w[i] = w[i] - dcfg.lr * step + dcfg.decay * ((*slow[n])[i] - w[i]);
        if (!std::isfinite(w[i])) finite = false;
      }
    }
    if (observer) observer({DynevalEvent::Kind::updated, k});
    if (!finite) complete = false;
    state = std::move(fwd.final_state);
  }
  EvalReport report = make_report(total, tokens, temperature);
  report.dyneval = dcfg;
  report.complete = complete;
  return report;
}

DynevalSearch tune_dyneval(const ModelParams& params, const ModelConfig& config,
                           std::span<const std::int32_t> stream, const DynevalGrid& grid,
                           double temperature) {
  if (grid.lr.empty() || grid.decay.empty() || grid.segment.empty()) {
    throw InvalidArgument("tune_dyneval: every grid axis needs at least one value");
  }
  DynevalSearch search;
  bool have = false;
  for (std::size_t segment : grid.segment)
    for (double lr : grid.lr)
      for (double decay : grid.decay) {
        DynevalConfig c{segment, lr, decay, grid.norm, grid.max_norm};
        const EvalReport r = evaluate_dynamic(params, config, stream, c, temperature);
        const double nll = r.complete ? r.nats_per_token : std::numeric_limits<double>::infinity();
        search.tried.emplace_back(c, nll);
        if (!have || nll < search.best_nats_per_token) {
          search.best = c;
          search.best_nats_per_token = nll;
          have = true;
        }
      }
  return search;
}

}  // namespace rnnlab
