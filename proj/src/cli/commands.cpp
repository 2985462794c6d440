#include "rnnlab/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>

#include "rnnlab/config.hpp"
#include "rnnlab/gradcheck.hpp"

namespace rnnlab {

namespace {

struct Options {
  std::string config;
  std::string checkpoint;
  std::uint64_t seed = 0;
  CLI::Option* seed_option = nullptr;
  std::string csv_out;
  std::string output_dir;
};

class Failure : public std::runtime_error {
 public:
  Failure(int code, const std::string& message) : std::runtime_error(message), code(code) {}
  int code;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

RunConfig load_options(const Options& opts, bool config_required) {
  RunConfig config;
  if (!opts.config.empty()) {
    config = load_run_config(opts.config);
  } else if (config_required) {
    throw ConfigError("--config is required");
  }
  if (opts.seed_option && opts.seed_option->count() > 0) config.seed = opts.seed;
  if (!opts.output_dir.empty()) {
    for (auto* p : {&config.checkpoint, &config.average_checkpoint, &config.metrics_log, &config.vocab_file,
                    &config.temperature_file}) {
      if (!p->empty()) *p = std::filesystem::path(opts.output_dir) / p->filename();
    }
  }
  if (!opts.checkpoint.empty()) config.checkpoint = opts.checkpoint;
  return config;
}

std::ofstream open_log(const std::filesystem::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream log(path, mode);
  if (!log) throw Failure(kExitUsage, "cannot open metrics log " + path.string());
  return log;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Failure(kExitUsage, "cannot write " + path.string());
}

// --- train ---------------------------------------------------------------

int cmd_train(const Options& opts, std::ostream& out) {
  RunConfig config = load_options(opts, true);
  // Everything that can fail on input is checked before any output exists.
  const Corpus corpus = load_corpus(config.train_path, config.valid_path, config.test_path, config.vocab_mode);
  config.model.vocab = corpus.vocab.size();
  config.model.validate();

  std::ofstream log = open_log(config.metrics_log, std::ios::trunc);
  log << "# rnnlab train\n";
  for (const auto& [key, value] : resolved_config(config)) log << "# " << key << "=" << value << "\n";
  log << "# vocab_size=" << corpus.vocab.size() << " train_tokens=" << corpus.train.size()
      << " valid_tokens=" << corpus.valid.size() << "\n";
  log.flush();

  std::optional<std::ofstream> csv;
  if (!opts.csv_out.empty()) {
    csv.emplace(opts.csv_out, std::ios::trunc);
    if (!*csv) throw Failure(kExitUsage, "cannot open " + opts.csv_out);
    *csv << "step,epoch,train_nats,valid_nats,tta_valid_nats,valid_bpc,tta_valid_bpc,lr,restarts\n";
  }

  TrainHooks hooks;
  hooks.on_validation = [&](const ValidationRecord& r) {
    const std::string line = r.record();
    log << line << "\n";
    log.flush();
    out << line << "\n";
    if (csv) {
      *csv << r.step << ',' << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.valid_loss) << ','
           << fmt(r.tta_valid_loss) << ',' << fmt(convert_metrics(r.valid_loss).bpc) << ','
           << fmt(convert_metrics(r.tta_valid_loss).bpc) << ',' << fmt(r.learning_rate) << ',' << r.restarts
           << "\n";
    }
  };
  hooks.on_restart = [&](const RestartEvent& e) {
    const std::string line = "restart step=" + std::to_string(e.step) + " trigger_nats=" + fmt(e.trigger_loss) +
                             " lr_before=" + fmt(e.lr_before) + " lr_after=" + fmt(e.lr_after);
    log << line << "\n";
    out << line << "\n";
  };

  TrainResult result;
  try {
    result = train(config.model, config.train, corpus.train, corpus.valid, config.seed, hooks);
  } catch (const TrainingDiverged& e) {
    log << "end status=diverged\n";
    throw Failure(kExitNumerical, e.what());
  }

  save_checkpoint(result.best, config.checkpoint);
  save_checkpoint(result.average, config.average_checkpoint);
  corpus.vocab.save(config.vocab_file);

  const std::string end = "end status=ok steps=" + std::to_string(result.steps) +
                          " stop_reason=" + result.stop_reason +
                          " best_valid_nats=" + fmt(result.best.best_valid_loss) +
                          " best_valid_bpc=" + fmt(convert_metrics(result.best.best_valid_loss).bpc) +
                          " average_valid_nats=" + fmt(result.best_average_loss) +
                          " average_valid_bpc=" + fmt(convert_metrics(result.best_average_loss).bpc);
  log << end << "\n";
  out << end << "\n";
  return kExitOk;
}

// --- evaluation commands ---------------------------------------------------

struct Loaded {
  RunConfig config;
  Checkpoint checkpoint;
  Vocab vocab;
};

Loaded load_for_eval(const Options& opts) {
  Loaded l{load_options(opts, true), {}, {}};
  l.checkpoint = load_checkpoint(l.config.checkpoint);
  l.vocab = Vocab::load(l.config.vocab_file, l.config.vocab_mode);
  if (l.vocab.size() != l.checkpoint.model.vocab) {
    throw Failure(kExitUsage, "vocabulary " + l.config.vocab_file.string() + " has " +
                                  std::to_string(l.vocab.size()) + " symbols but the checkpoint expects " +
                                  std::to_string(l.checkpoint.model.vocab));
  }
  return l;
}

TokenStream load_split(const Loaded& l, const std::string& split) {
  const std::filesystem::path& path = split == "valid" ? l.config.valid_path : l.config.test_path;
  if (path.empty()) throw ConfigError("data." + split + " is not set");
  return l.vocab.encode(read_text_file(path));
}

double read_temperature(const RunConfig& config) {
  if (config.temperature_file.empty() || !std::filesystem::exists(config.temperature_file)) {
    return config.temperature;
  }
  const std::string text = read_text_file(config.temperature_file);
  std::size_t used = 0;
  double t = 0.0;
  try {
    t = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || text.find_first_not_of(" \t\r\n", used) != std::string::npos || !(t > 0.0)) {
    throw ConfigError("malformed temperature file " + config.temperature_file.string());
  }
  return t;
}

void log_report(const RunConfig& config, const std::string& command, const std::string& split,
                const std::string& record) {
  std::ofstream log = open_log(config.metrics_log, std::ios::app);
  log << "command=" << command << " split=" << split << " " << record << "\n";
}

int cmd_evaluate(const Options& opts, std::ostream& out) {
  const Loaded l = load_for_eval(opts);
  const TokenStream stream = load_split(l, l.config.eval_split);
  const EvalReport report = evaluate_static(l.checkpoint.params, l.checkpoint.model, stream,
                                            read_temperature(l.config), l.config.eval_rows, l.config.eval_window);
  out << report.record() << "\n";
  log_report(l.config, "evaluate", l.config.eval_split, report.record());
  return kExitOk;
}

std::string describe(const DynevalConfig& d) {
  std::string s = "lr=" + fmt(d.lr) + " decay=" + fmt(d.decay) + " segment=" + std::to_string(d.segment) +
                  " norm=" + to_string(d.norm);
  if (d.norm == GradNorm::global_norm) s += " max_norm=" + fmt(d.max_norm);
  return s;
}

int cmd_dyneval(const Options& opts, std::ostream& out) {
  const Loaded l = load_for_eval(opts);
  const double temperature = read_temperature(l.config);
  const DynevalGrid& grid = l.config.dyneval;
  DynevalConfig chosen{grid.segment.front(), grid.lr.front(), grid.decay.front(), grid.norm, grid.max_norm};
  if (grid.lr.size() * grid.decay.size() * grid.segment.size() > 1) {
    const TokenStream valid = load_split(l, "valid");
    const DynevalSearch search = tune_dyneval(l.checkpoint.params, l.checkpoint.model, valid, grid, temperature);
    for (const auto& [cfg, nats] : search.tried) out << "tried " << describe(cfg) << " valid_nats=" << fmt(nats) << "\n";
    chosen = search.best;
  }
  out << "selected " << describe(chosen) << "\n";
  const TokenStream stream = load_split(l, l.config.eval_split);
  const EvalReport report = evaluate_dynamic(l.checkpoint.params, l.checkpoint.model, stream, chosen, temperature);
  out << report.record() << "\n";
  log_report(l.config, "dyneval", l.config.eval_split, describe(chosen) + " " + report.record());
  if (!report.complete) throw Failure(kExitNumerical, "dynamic evaluation produced non-finite values");
  return kExitOk;
}

int cmd_tune_temperature(const Options& opts, std::ostream& out) {
  const Loaded l = load_for_eval(opts);
  if (l.config.temperature_file.empty()) throw ConfigError("eval.temperature_file is not set");
  const TokenStream valid = load_split(l, "valid");
  const std::vector<double> grid =
      l.config.temperature_grid.empty() ? default_temperature_grid() : l.config.temperature_grid;
  const TemperatureSearch search =
      tune_temperature(l.checkpoint.params, l.checkpoint.model, valid, grid, l.config.eval_rows, l.config.eval_window);
  for (std::size_t i = 0; i < search.grid.size(); ++i) {
    out << "temperature=" << fmt(search.grid[i]) << " valid_nats=" << fmt(search.nats_per_token[i]) << "\n";
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g\n", search.best);
  write_text(l.config.temperature_file, buf);
  const std::string line = "selected temperature=" + fmt(search.best) + " file=" + l.config.temperature_file.string();
  out << line << "\n";
  log_report(l.config, "tune-temperature", "valid", line.substr(9));
  return kExitOk;
}

int cmd_gradcheck(const Options& opts, std::ostream& out) {
  const RunConfig config = load_options(opts, false);
  bool ok = true;
  for (const GradcheckResult& r : run_gradcheck(config.seed, config.gradcheck_corrupt)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", r.max_relative_error);
    out << "component=" << r.component << " max_relative_error=" << buf
        << " status=" << (r.passed() ? "pass" : "FAIL") << "\n";
    ok = ok && r.passed();
  }
  out << "gradcheck " << (ok ? "passed" : "failed") << "\n";
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mogrifier and residual LSTM language models"};
  app.name("rnnlab");
  app.require_subcommand(1, 1);
  Options opts;

  const auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--checkpoint", opts.checkpoint, "Checkpoint path (overrides output.checkpoint)");
    sub->add_option("--seed", opts.seed, "Random seed (overrides the config)");
    sub->add_option("--csv-out", opts.csv_out, "Also write validation records as CSV");
    sub->add_option("--output-dir", opts.output_dir, "Directory for every output file (keeps the file names)");
    return sub;
  };
  CLI::App* train_cmd = add("train", "Train a model and write checkpoints and a metrics log");
  CLI::App* eval_cmd = add("evaluate", "Static evaluation of a checkpoint");
  CLI::App* dyn_cmd = add("dyneval", "Dynamic evaluation, tuned on the validation split");
  CLI::App* temp_cmd = add("tune-temperature", "Pick the softmax temperature on the validation split");
  CLI::App* grad_cmd = add("gradcheck", "Finite-difference check of every backward pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }
  CLI::App* chosen = app.get_subcommands().front();
  opts.seed_option = chosen->get_option("--seed");

  try {
    if (chosen == train_cmd) return cmd_train(opts, out);
    if (chosen == eval_cmd) return cmd_evaluate(opts, out);
    if (chosen == dyn_cmd) return cmd_dyneval(opts, out);
    if (chosen == temp_cmd) return cmd_tune_temperature(opts, out);
    if (chosen == grad_cmd) return cmd_gradcheck(opts, out);
  } catch (const Failure& e) {
    err << "rnnlab: " << e.what() << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "rnnlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "rnnlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "rnnlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "rnnlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "rnnlab: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace rnnlab
