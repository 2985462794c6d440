#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rnnlab/data.hpp"
#include "rnnlab/evaluation.hpp"
#include "rnnlab/model.hpp"
#include "rnnlab/training.hpp"

namespace rnnlab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One `key = value` line; `key` is qualified by its section ("model.hidden").
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses INI-style text: `[section]` headers, `key = value` pairs, and
/// comments starting with '#' or ';'. Duplicate keys are errors.
std::vector<ConfigEntry> parse_config_text(std::string_view text, const std::string& source);

struct RunConfig {
  std::uint64_t seed = 1;

  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  VocabMode vocab_mode = VocabMode::byte;

  ModelConfig model;  // vocab is filled in from the corpus
  TrainConfig train;

  std::string eval_split = "test";
  std::size_t eval_rows = 1;
  std::size_t eval_window = 128;
  double temperature = 1.0;
  std::filesystem::path temperature_file = "temperature.txt";
  std::vector<double> temperature_grid;  // empty = default grid

  DynevalGrid dyneval;

  std::filesystem::path checkpoint = "best.ckpt";
  std::filesystem::path average_checkpoint = "average.ckpt";
  std::filesystem::path metrics_log = "metrics.log";
  std::filesystem::path vocab_file = "vocab.txt";

  std::string gradcheck_corrupt;  // component name; empty = none
};

/// Relative paths, including the default output paths, are resolved
/// against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::string& source,
                           const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key with its effective value, in a fixed order.
std::vector<std::pair<std::string, std::string>> resolved_config(const RunConfig& config);

/// Keys accepted in config files.
std::vector<std::string> config_keys();

}  // namespace rnnlab
