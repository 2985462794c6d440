#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rnnlab/model.hpp"

namespace rnnlab {

struct Metrics {
  double perplexity = 1.0;
  double bpc = 0.0;
};

/// perplexity = e^nll, bpc = nll / ln 2.
Metrics convert_metrics(double nats_per_token);

enum class GradNorm { none, global_norm };

std::string to_string(GradNorm mode);
GradNorm parse_grad_norm(std::string_view text);

struct DynevalConfig {
  std::size_t segment = 100;
  double lr = 0.0;
  double decay = 0.0;  // pull towards the original weights, in [0, 1)
  GradNorm norm = GradNorm::none;
  double max_norm = 1.0;  // used when norm == global_norm

  void validate() const;
};

struct EvalReport {
  double total_nats = 0.0;
  std::size_t tokens = 0;
  double nats_per_token = 0.0;
  double perplexity = 1.0;
  double bpc = 0.0;
  double temperature = 1.0;
  std::optional<DynevalConfig> dyneval;
  bool complete = true;  // false when dynamic evaluation stopped early

  /// Single line of key=value pairs. The dyneval settings are not part of
  /// it, so a zero-rate dynamic run prints the same line as a static one.
  std::string record() const;
};

EvalReport make_report(double total_nats, std::size_t tokens, double temperature);

/// Deterministic pass over the whole stream with carried state. With
/// rows > 1 the stream is cut into contiguous rows evaluated side by side.
EvalReport evaluate_static(const ModelParams& params, const ModelConfig& config,
                           std::span<const std::int32_t> stream, double temperature = 1.0,
                           std::size_t rows = 1, std::size_t window = 128);

/// 0.70, 0.72, ..., 1.30.
std::vector<double> default_temperature_grid();

struct TemperatureSearch {
  double best = 1.0;
  std::vector<double> grid;
  std::vector<double> nats_per_token;  // one per grid entry
};

/// Grid argmax of validation log-likelihood; ties go to the temperature
/// closest to 1 (then the smaller one).
TemperatureSearch tune_temperature(const ModelParams& params, const ModelConfig& config,
                                   std::span<const std::int32_t> stream, std::span<const double> grid,
                                   std::size_t rows = 1, std::size_t window = 128);

struct DynevalEvent {
  enum class Kind { scored, updated };
  Kind kind;
  std::size_t segment;
};
using DynevalObserver = std::function<void(const DynevalEvent&)>;

/// Scores each segment with the current weights, then takes one step on that
/// segment's mean loss: theta <- theta - lr * g + decay * (theta0 - theta).
/// Batch size 1, deterministic masks.
EvalReport evaluate_dynamic(const ModelParams& params, const ModelConfig& config,
                            std::span<const std::int32_t> stream, const DynevalConfig& dcfg,
                            double temperature = 1.0, const DynevalObserver& observer = {});

struct DynevalGrid {
  std::vector<double> lr{0.0};
  std::vector<double> decay{0.0};
  std::vector<std::size_t> segment{100};
  GradNorm norm = GradNorm::none;
  double max_norm = 1.0;
};

struct DynevalSearch {
  DynevalConfig best;
  double best_nats_per_token = 0.0;
  std::vector<std::pair<DynevalConfig, double>> tried;
};

/// Exhaustive search; ties keep the earlier grid point.
DynevalSearch tune_dyneval(const ModelParams& params, const ModelConfig& config,
                           std::span<const std::int32_t> stream, const DynevalGrid& grid,
                           double temperature = 1.0);

}  // namespace rnnlab
