#include "rnnlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>

namespace rnnlab {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    const std::string_view item = trim(s.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (item.empty()) throw ConfigError("empty entry in list '" + std::string(s) + "'");
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F&& format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format(values[i]);
  }
  return out;
}

std::string size_str(std::size_t v) { return std::to_string(v); }
std::string bool_str(bool v) { return v ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view, const std::filesystem::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::filesystem::path resolve(std::string_view value, const std::filesystem::path& base) {
  const std::filesystem::path p{std::string(value)};
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

#define RNNLAB_SIZE(KEY, MEMBER)                                                                       \
  Field {                                                                                              \
    KEY, [](RunConfig& c, std::string_view v, const auto&) { c.MEMBER = parse_u64(v); },               \
        [](const RunConfig& c) { return size_str(c.MEMBER); }                                          \
  }
#define RNNLAB_DOUBLE(KEY, MEMBER)                                                                     \
  Field {                                                                                              \
    KEY, [](RunConfig& c, std::string_view v, const auto&) { c.MEMBER = parse_double(v); },            \
        [](const RunConfig& c) { return fmt_double(c.MEMBER); }                                        \
  }
#define RNNLAB_BOOL(KEY, MEMBER)                                                                       \
  Field {                                                                                              \
    KEY, [](RunConfig& c, std::string_view v, const auto&) { c.MEMBER = parse_bool(v); },              \
        [](const RunConfig& c) { return bool_str(c.MEMBER); }                                          \
  }
#define RNNLAB_PATH(KEY, MEMBER)                                                                       \
  Field {                                                                                              \
    KEY, [](RunConfig& c, std::string_view v, const auto& base) { c.MEMBER = resolve(v, base); },      \
        [](const RunConfig& c) { return c.MEMBER.string(); }                                           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      RNNLAB_SIZE("seed", seed),

      RNNLAB_PATH("data.train", train_path),
      RNNLAB_PATH("data.valid", valid_path),
      RNNLAB_PATH("data.test", test_path),
      Field{"data.mode", [](RunConfig& c, std::string_view v, const auto&) { c.vocab_mode = parse_vocab_mode(v); },
            [](const RunConfig& c) { return to_string(c.vocab_mode); }},

      RNNLAB_SIZE("model.layers", model.layers),
      RNNLAB_SIZE("model.hidden", model.hidden),
      Field{"model.cell", [](RunConfig& c, std::string_view v, const auto&) { c.model.cell = parse_cell_kind(v); },
            [](const RunConfig& c) { return std::string(to_string(c.model.cell)); }},
      RNNLAB_BOOL("model.cap_input_gate", model.cap_input_gate),
      RNNLAB_SIZE("model.mogrifier_rounds", model.mogrifier_rounds),
      RNNLAB_SIZE("model.mogrifier_rank", model.mogrifier_rank),
      RNNLAB_DOUBLE("model.keep_input", model.keep_input),
      RNNLAB_DOUBLE("model.keep_cell", model.keep_cell),
      RNNLAB_DOUBLE("model.keep_state", model.keep_state),
      RNNLAB_DOUBLE("model.keep_output", model.keep_output),
      RNNLAB_BOOL("model.tie_embeddings", model.tie_embeddings),
      RNNLAB_BOOL("model.input_row_dropout", model.input_row_dropout),
      RNNLAB_BOOL("model.embedding_in_residual", model.embedding_in_residual),
      RNNLAB_SIZE("model.dropout_samples", model.dropout_samples),
      RNNLAB_DOUBLE("model.chrono_t_max", model.chrono_t_max),

      RNNLAB_SIZE("train.epochs", train.epochs),
      RNNLAB_SIZE("train.batch_size", train.batch_size),
      RNNLAB_SIZE("train.bptt", train.bptt),
      RNNLAB_DOUBLE("train.lr", train.optimizer.lr),
      RNNLAB_DOUBLE("train.beta1", train.optimizer.beta1),
      RNNLAB_DOUBLE("train.beta2", train.optimizer.beta2),
      RNNLAB_DOUBLE("train.eps", train.optimizer.eps),
      RNNLAB_DOUBLE("train.clip_norm", train.clip_norm),
      RNNLAB_DOUBLE("train.divergence_factor", train.divergence_factor),
      RNNLAB_SIZE("train.max_restarts", train.max_restarts),
      RNNLAB_SIZE("train.validate_every", train.validate_every),
      RNNLAB_SIZE("train.patience", train.patience),
      RNNLAB_SIZE("train.valid_rows", train.valid_rows),
      RNNLAB_SIZE("train.max_steps", train.max_steps),
      RNNLAB_DOUBLE("train.time_budget_seconds", train.time_budget_seconds),
      RNNLAB_DOUBLE("train.target_valid_bpc", train.target_valid_bpc),

      Field{"eval.split",
            [](RunConfig& c, std::string_view v, const auto&) {
              if (v != "valid" && v != "test") throw ConfigError("expected valid or test, got '" + std::string(v) + "'");
              c.eval_split = std::string(v);
            },
            [](const RunConfig& c) { return c.eval_split; }},
      RNNLAB_SIZE("eval.rows", eval_rows),
      RNNLAB_SIZE("eval.window", eval_window),
      RNNLAB_DOUBLE("eval.temperature", temperature),
      RNNLAB_PATH("eval.temperature_file", temperature_file),
      Field{"eval.temperature_grid",
            [](RunConfig& c, std::string_view v, const auto&) {
              c.temperature_grid.clear();
              for (std::string_view item : split_list(v)) c.temperature_grid.push_back(parse_double(item));
            },
            [](const RunConfig& c) {
              return c.temperature_grid.empty() ? std::string("default") : join(c.temperature_grid, fmt_double);
            }},

      Field{"dyneval.lr",
            [](RunConfig& c, std::string_view v, const auto&) {
              c.dyneval.lr.clear();
              for (std::string_view item : split_list(v)) c.dyneval.lr.push_back(parse_double(item));
            },
            [](const RunConfig& c) { return join(c.dyneval.lr, fmt_double); }},
      Field{"dyneval.decay",
            [](RunConfig& c, std::string_view v, const auto&) {
              c.dyneval.decay.clear();
              for (std::string_view item : split_list(v)) c.dyneval.decay.push_back(parse_double(item));
            },
            [](const RunConfig& c) { return join(c.dyneval.decay, fmt_double); }},
      Field{"dyneval.segment",
            [](RunConfig& c, std::string_view v, const auto&) {
              c.dyneval.segment.clear();
              for (std::string_view item : split_list(v)) c.dyneval.segment.push_back(parse_u64(item));
            },
            [](const RunConfig& c) { return join(c.dyneval.segment, size_str); }},
      Field{"dyneval.norm",
            [](RunConfig& c, std::string_view v, const auto&) { c.dyneval.norm = parse_grad_norm(v); },
            [](const RunConfig& c) { return to_string(c.dyneval.norm); }},
      RNNLAB_DOUBLE("dyneval.max_norm", dyneval.max_norm),

      RNNLAB_PATH("output.checkpoint", checkpoint),
      RNNLAB_PATH("output.average_checkpoint", average_checkpoint),
      RNNLAB_PATH("output.metrics_log", metrics_log),
      RNNLAB_PATH("output.vocab", vocab_file),

      Field{"gradcheck.corrupt",
            [](RunConfig& c, std::string_view v, const auto&) { c.gradcheck_corrupt = std::string(v); },
            [](const RunConfig& c) { return c.gradcheck_corrupt; }},
  };
  return table;
}

#undef RNNLAB_SIZE
#undef RNNLAB_DOUBLE
#undef RNNLAB_BOOL
#undef RNNLAB_PATH

}  // namespace

std::vector<ConfigEntry> parse_config_text(std::string_view text, const std::string& source) {
  std::vector<ConfigEntry> entries;
  std::map<std::string, std::size_t> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    const auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    if (line.empty() || line[0] == '#' || line[0] == ';') {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where() + "empty section name");
    } else {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError(where() + "expected 'key = value'");
      const std::string_view key = trim(line.substr(0, eq));
      const std::string_view value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(where() + "missing key before '='");
      const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
      if (const auto it = seen.find(full); it != seen.end()) {
        throw ConfigError(where() + "duplicate key '" + full + "' (first set on line " +
                          std::to_string(it->second) + ")");
      }
      seen.emplace(full, line_no);
      entries.push_back({full, std::string(value), line_no});
    }
    if (end == text.size()) break;
  }
  return entries;
}

RunConfig parse_run_config(std::string_view text, const std::string& source, const std::filesystem::path& base_dir) {
  std::map<std::string, const Field*, std::less<>> by_key;
  for (const Field& f : fields()) by_key.emplace(f.key, &f);

  RunConfig config;
  for (auto* p : {&config.temperature_file, &config.checkpoint, &config.average_checkpoint, &config.metrics_log,
                  &config.vocab_file}) {
    *p = resolve(p->string(), base_dir);
  }
  for (const ConfigEntry& e : parse_config_text(text, source)) {
    const std::string where = source + ":" + std::to_string(e.line) + ": ";
    const auto it = by_key.find(e.key);
    if (it == by_key.end()) {
      const std::size_t dot = e.key.rfind('.');
      const std::string section = dot == std::string::npos ? std::string("top level") : "[" + e.key.substr(0, dot) + "]";
      throw ConfigError(where + "unknown key '" + (dot == std::string::npos ? e.key : e.key.substr(dot + 1)) +
                        "' in " + section);
    }
    try {
      it->second->set(config, e.value, base_dir);
    } catch (const ConfigError& err) {
      throw ConfigError(where + e.key + ": " + err.what());
    } catch (const InvalidArgument& err) {
      throw ConfigError(where + e.key + ": " + err.what());
    }
  }

  try {
    ModelConfig probe = config.model;
    probe.vocab = std::max<std::size_t>(probe.vocab, 2);
    probe.validate();
    config.train.validate();
    if (config.eval_rows == 0) throw InvalidArgument("eval.rows must be at least 1");
    if (config.eval_window == 0) throw InvalidArgument("eval.window must be at least 1");
    if (!(config.temperature > 0.0)) throw InvalidArgument("eval.temperature must be positive");
    for (double t : config.temperature_grid)
      if (!(t > 0.0)) throw InvalidArgument("eval.temperature_grid entries must be positive");
    for (std::size_t s : config.dyneval.segment)
      for (double lr : config.dyneval.lr)
        for (double decay : config.dyneval.decay)
          DynevalConfig{s, lr, decay, config.dyneval.norm, config.dyneval.max_norm}.validate();
  } catch (const InvalidArgument& err) {
    throw ConfigError(source + ": " + err.what());
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_run_config(text, path.string(), path.parent_path());
}

std::vector<std::pair<std::string, std::string>> resolved_config(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace rnnlab
