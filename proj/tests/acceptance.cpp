// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rnnlab/cells.hpp"
#include "rnnlab/cli.hpp"
#include "rnnlab/data.hpp"
#include "rnnlab/evaluation.hpp"
#include "rnnlab/gradcheck.hpp"
#include "rnnlab/training.hpp"

using namespace rnnlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rnnlab_acceptance_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "rnnlab");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "%s", e.str().c_str());
  return code;
}

double field(const std::string& text, const std::string& key) {
  const std::size_t p = text.rfind(" " + key + "=");
  if (p == std::string::npos) throw std::runtime_error("no field " + key);
  return std::stod(text.substr(p + key.size() + 2));
}

// --- 1 -----------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const std::vector<GradcheckResult> results = run_gradcheck(1);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool ok = true;
  for (const GradcheckResult& r : results) {
    ok = ok && r.passed();
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.component;
    }
  }
  return {ok && elapsed < 120.0, std::to_string(results.size()) + " components, worst " + worst_name + " " +
                                     fmt("%.2e", worst) + ", " + fmt("%.1f", elapsed) + " s"};
}

// --- 2 -----------------------------------------------------------------

Outcome bounded_state() {
  Rng rng(2);
  const std::size_t n = 8;
  std::size_t violations = 0;
  double largest = 0.0;
  for (CellKind kind : {CellKind::rlstm, CellKind::lstm}) {
    for (int draw = 0; draw < 50; ++draw) {
      CellParams params = zero_cell_params(kind, n, n);
      const double scale = rng.uniform(0.5, 5.0);
      for_each_tensor(params, [&](auto, Matrix& m) { m = uniform_matrix(rng, m.rows(), m.cols(), -scale, scale); });
      CellState state{uniform_matrix(rng, 1, n, -1, 1), uniform_matrix(rng, 1, n, -1, 1)};
      for (int step = 0; step < 10000; ++step) {
        const Matrix x = uniform_matrix(rng, 1, n, -3.0, 3.0);
        state = cell_forward(params, state, x, true, Matrix()).state;
        for (double c : state.c.data()) {
          largest = std::max(largest, std::abs(c));
          if (!(std::abs(c) <= 1.0)) ++violations;
        }
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " violations, max |c| " + fmt("%.17g", largest)};
}

// --- 3 -----------------------------------------------------------------

Outcome multisample() {
  Rng rng(3);
  ModelConfig config;
  config.layers = 2;
  config.hidden = 8;
  config.vocab = 6;
  config.mogrifier_rounds = 2;
  config.keep_input = config.keep_cell = config.keep_state = config.keep_output = 0.6;
  const ModelParams params = init_model_params(rng, config);
  const std::size_t batch = 2, steps = 5;
  std::size_t exact_failures = 0, violations = 0, checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    WindowBatch w{batch, steps, {}, {}};
    for (std::size_t i = 0; i < batch * steps; ++i) {
      w.inputs.push_back(static_cast<std::int32_t>(rng.next_u64() % config.vocab));
      w.targets.push_back(static_cast<std::int32_t>(rng.next_u64() % config.vocab));
    }
    ModelState initial = zero_state(config, batch);
    for (CellState& s : initial) s.h = uniform_matrix(rng, batch, config.hidden, -0.5, 0.5);

    // D = 1 against a direct forward pass with the same masks.
    const std::uint64_t seed = rng.next_u64();
    Rng a(seed), b(seed);
    const LossResult one = loss_multisample(params, config, w, initial, a, 1, false);
    const MaskSet masks = sample_masks(b, config, batch, steps);
    const ForwardResult fwd = forward_window(params, config, w, initial, masks, 1.0, false);
    double total = 0.0;
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t bb = 0; bb < batch; ++bb) total += fwd.log_prob(bb, t, w.target(bb, t));
    if (one.loss != -total / static_cast<double>(batch * steps)) ++exact_failures;

    for (std::size_t d : {2u, 4u, 8u}) {
      const LossResult r = loss_multisample(params, config, w, initial, rng, d, false);
      for (std::size_t k = 0; k < batch * steps; ++k) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t s = 0; s < d; ++s) {
          lo = std::min(lo, r.sample_log_likelihood[s][k]);
          hi = std::max(hi, r.sample_log_likelihood[s][k]);
        }
        ++checked;
        if (!(r.token_log_likelihood[k] >= lo && r.token_log_likelihood[k] <= hi)) ++violations;
      }
    }
  }
  return {exact_failures == 0 && violations == 0,
          "D=1 mismatches " + std::to_string(exact_failures) + ", bound violations " + std::to_string(violations) +
              " of " + std::to_string(checked)};
}

// --- 4 -----------------------------------------------------------------

ModelParams scalars(std::vector<double> values) {
  ModelParams p;
  const std::size_t n = values.size();
  p.embedding = Matrix(1, n, std::move(values));
  p.output_bias = Matrix(1, 1);
  return p;
}

Outcome tta_oracle() {
  // Brute force: every recorded iterate is kept and tails are re-averaged.
  Rng rng(4);
  TtaState state;
  std::vector<std::vector<double>> history;
  double worst = 0.0;
  std::size_t swaps = 0;
  const auto loss = [](const ModelParams& p) {
    double s = 0.0;
    for (double x : p.embedding.data()) s += (x - 1.0) * (x - 1.0);
    return s;
  };
  for (std::uint64_t step = 1; step <= 1000; ++step) {
    std::vector<double> x(3);
    // Noisy iterates settling towards the optimum, so the short tail keeps winning.
    const double k = static_cast<double>(step);
    for (double& v : x) v = 1.0 + 20.0 / (20.0 + k) * rng.uniform(-5.0, 5.0) + 3.0 * std::exp(-k / 150.0);
    history.push_back(x);
    tta_update(state, scalars(x), step);
    for (const TtaTail* tail : {&state.long_tail, &state.short_tail}) {
      if (tail->count != step - tail->start + 1) return {false, "tail count does not match its start"};
      for (std::size_t j = 0; j < 3; ++j) {
        long double sum = 0.0L;
        for (std::uint64_t i = tail->start; i <= step; ++i) sum += history[i - 1][j];
        const double brute = static_cast<double>(sum / static_cast<long double>(tail->count));
        worst = std::max(worst, std::abs(tail->mean.embedding[j] - brute));
      }
    }
    if (step % 25 == 0 && tta_evaluate_and_swap(state, loss, step).swapped) ++swaps;
  }

  Rng noise(5);
  TtaState q;
  ModelParams w = scalars({5.0});
  const auto objective = [](const ModelParams& p) { return 0.5 * p.embedding[0] * p.embedding[0]; };
  TtaSelection sel;
  for (std::uint64_t step = 1; step <= 500; ++step) {
    w.embedding[0] -= 0.1 * (w.embedding[0] + noise.normal());
    tta_update(q, w, step);
    if (step % 50 == 0) sel = tta_evaluate_and_swap(q, objective, step);
  }
  const bool ok = worst <= 1e-12 && sel.loss <= objective(w);
  return {ok, "max tail error " + fmt("%.2e", worst) + " over " + std::to_string(swaps) +
                  " swaps; quadratic average " + fmt("%.3e", sel.loss) + " vs raw " + fmt("%.3e", objective(w))};
}

// --- 5 -----------------------------------------------------------------

Outcome radam_boundary() {
  const long double b2 = 0.999L;
  const long double rho_inf = 2.0L / (1.0L - b2) - 1.0L;
  ModelParams p = scalars({0.5, -1.0});
  ModelParams before = p;
  RAdamState s = RAdamState::init(p, {0.01, 0.9, 0.999, 1e-8});
  const ModelParams g = scalars({0.3, -2.0});
  bool ok = true;
  std::string trace;
  double m[2] = {0, 0};
  for (std::uint64_t t = 1; t <= 6; ++t) {
    const long double bt = std::pow(b2, static_cast<long double>(t));
    const long double rho = rho_inf - 2.0L * static_cast<long double>(t) * bt / (1.0L - bt);
    before = p;
    const RAdamStepInfo info = radam_step(s, p, g);
    const bool expect_rectified = rho > 4.0L;
    ok = ok && info.applied && info.rectified == expect_rectified && expect_rectified == (t >= 5);
    ok = ok && std::abs(info.rho - static_cast<double>(rho)) <= 1e-9 * static_cast<double>(rho);
    for (std::size_t i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g.embedding[i];
      if (!expect_rectified) {
        // Momentum only: w -= lr * m_hat.
        const double expected = before.embedding[i] - 0.01 * (m[i] / (1.0 - std::pow(0.9, static_cast<double>(t))));
        ok = ok && std::abs(p.embedding[i] - expected) <= 1e-15 * std::abs(expected);
      }
    }
    trace += (t > 1 ? " " : "") + std::to_string(t) + (info.rectified ? ":rect" : ":mom");
  }
  return {ok, trace};
}

// --- 6 -----------------------------------------------------------------

ModelConfig tiny_model(std::size_t vocab) {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 8;
  c.vocab = vocab;
  c.mogrifier_rounds = 2;
  c.keep_cell = 0.9;
  return c;
}

std::vector<std::int32_t> pattern_stream(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int32_t> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = static_cast<std::int32_t>(i % 5);
    if (rng.uniform() < 0.1) s[i] = static_cast<std::int32_t>(5 + rng.next_u64() % 3);
  }
  return s;
}

Outcome restart_rule() {
  const ModelConfig model = tiny_model(8);
  const auto train_stream = pattern_stream(2000, 1);
  const auto valid_stream = pattern_stream(300, 2);
  TrainConfig config;
  config.epochs = 2;
  config.batch_size = 4;
  config.bptt = 10;
  config.optimizer.lr = 0.01;
  config.validate_every = 10;

  bool injected = false, seen = false, ok = true;
  std::string detail;
  TrainHooks hooks;
  hooks.after_loss = [&](std::uint64_t step, double& loss) {
    if (step == 35 && !injected) {
      loss = std::nan("");
      injected = true;
    }
  };
  hooks.on_restart = [&](const RestartEvent& e) {
    seen = true;
    const Checkpoint& best = *e.restored_from;
    ok = ok && flatten(*e.params) == flatten(best.params);
    ok = ok && flatten(e.optimizer->m) == flatten(best.optimizer.m);
    ok = ok && flatten(e.optimizer->v) == flatten(best.optimizer.v);
    ok = ok && e.optimizer->step == best.optimizer.step;
    ok = ok && e.optimizer->lr == e.lr_after;
    ok = ok && e.lr_after == e.lr_before * 0.9;
    detail = "restart at step " + std::to_string(e.step) + " restored step " + std::to_string(best.step) +
             ", lr " + fmt("%.17g", e.lr_before) + " -> " + fmt("%.17g", e.lr_after);
  };
  const TrainResult r = train(model, config, train_stream, valid_stream, 7, hooks);
  ok = ok && seen && r.records.back().restarts == 1 && r.records.back().learning_rate == 0.01 * 0.9;
  return {ok, seen ? detail : "no restart happened"};
}

// --- 7 -----------------------------------------------------------------

Outcome desk_training(const std::filesystem::path& configs) {
  struct Run {
    const char* name;
    double threshold;
  };
  bool ok = true;
  std::string detail;
  for (const Run run : {Run{"desk_rlstm", 2.5}, Run{"desk_lstm", 2.6}}) {
    const auto dir = scratch(run.name);
    const auto t0 = Clock::now();
    std::string out;
    const int code = cli({"train", "--config", (configs / (std::string(run.name) + ".ini")).string(),
                          "--output-dir", dir.string()},
                         &out);
    const double elapsed = seconds_since(t0);
    if (code != 0) return {false, std::string(run.name) + " exited with " + std::to_string(code)};
    const double bpc = std::min(field(out, "best_valid_bpc"), field(out, "average_valid_bpc"));
    const bool pass = bpc <= run.threshold && elapsed <= 1800.0;
    ok = ok && pass;
    std::fprintf(stderr, "  %s: valid bpc %.4f in %.0f s (%s)\n", run.name, bpc, elapsed,
                 out.substr(out.rfind("end "), out.find('\n', out.rfind("end ")) - out.rfind("end ")).c_str());
    detail += std::string(detail.empty() ? "" : "; ") + run.name + " bpc " + fmt("%.3f", bpc) + " in " +
              fmt("%.0f", elapsed) + " s";
    std::filesystem::remove_all(dir);
  }
  return {ok, detail};
}

// --- 8 -----------------------------------------------------------------

// First-order Markov source over `vocab` symbols; each symbol strongly
// prefers two successors.
struct MarkovSource {
  std::vector<std::vector<double>> cdf;

  MarkovSource(Rng& rng, std::size_t vocab) : cdf(vocab, std::vector<double>(vocab)) {
    for (std::size_t a = 0; a < vocab; ++a) {
      std::vector<double> p(vocab, 0.1 / static_cast<double>(vocab));
      p[rng.next_u64() % vocab] += 0.45;
      p[rng.next_u64() % vocab] += 0.45;
      double acc = 0.0;
      for (std::size_t b = 0; b < vocab; ++b) cdf[a][b] = acc += p[b];
    }
  }

  void emit(Rng& rng, std::size_t count, std::vector<std::int32_t>& out) const {
    std::int32_t cur = out.empty() ? 0 : out.back();
    for (std::size_t i = 0; i < count; ++i) {
      const double u = rng.uniform() * cdf[cur].back();
      std::size_t b = 0;
      while (b + 1 < cdf[cur].size() && cdf[cur][b] <= u) ++b;
      cur = static_cast<std::int32_t>(b);
      out.push_back(cur);
    }
  }
};

struct DomainRun {
  double static_valid = 0.0;
  double tuned_valid = 0.0;
  double static_test_bpc = 0.0;
  double dynamic_test_bpc = 0.0;
  DynevalConfig chosen;
};

// Trained on domain A only; validation and test are A followed by B.
DomainRun two_domain(std::uint64_t seed) {
  const std::size_t vocab = 8;
  Rng rng(seed);
  const MarkovSource a(rng, vocab), b(rng, vocab);
  std::vector<std::int32_t> train_stream, valid, test;
  a.emit(rng, 20000, train_stream);
  a.emit(rng, 1000, valid);
  b.emit(rng, 1000, valid);
  a.emit(rng, 1000, test);
  b.emit(rng, 1000, test);

  ModelConfig model;
  model.layers = 1;
  model.hidden = 16;
  model.vocab = vocab;
  model.mogrifier_rounds = 2;
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 8;
  config.bptt = 20;
  config.optimizer.lr = 0.01;
  const TrainResult trained = train(model, config, train_stream, valid, seed);
  const ModelParams& params = trained.best.params;

  DynevalGrid grid;
  grid.lr = {0.0, 0.003, 0.01, 0.03, 0.1};
  grid.decay = {0.0, 0.001};
  grid.segment = {20};
  const DynevalSearch search = tune_dyneval(params, model, valid, grid);

  DomainRun r;
  r.static_valid = evaluate_static(params, model, valid).nats_per_token;
  r.tuned_valid = search.best_nats_per_token;
  r.chosen = search.best;
  r.static_test_bpc = evaluate_static(params, model, test).bpc;
  r.dynamic_test_bpc = evaluate_dynamic(params, model, test, search.best).bpc;
  return r;
}

Outcome dynamic_evaluation() {
  std::size_t improved = 0;
  bool never_worse_on_valid = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DomainRun r = two_domain(seed);
    never_worse_on_valid = never_worse_on_valid && r.tuned_valid <= r.static_valid;
    if (r.dynamic_test_bpc < r.static_test_bpc) ++improved;
    std::fprintf(stderr, "  seed %llu: valid %.5f -> %.5f nats, test %.4f -> %.4f bpc (lr %g decay %g)\n",
                 static_cast<unsigned long long>(seed), r.static_valid, r.tuned_valid, r.static_test_bpc,
                 r.dynamic_test_bpc, r.chosen.lr, r.chosen.decay);
  }
  return {never_worse_on_valid && improved >= 4,
          "tuned valid <= static in every seed: " + std::string(never_worse_on_valid ? "yes" : "no") +
              "; test improved in " + std::to_string(improved) + "/5 seeds"};
}

// --- 9 -----------------------------------------------------------------

Outcome temperature_tuning() {
  const ModelConfig model = tiny_model(8);
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 4;
  config.bptt = 10;
  config.optimizer.lr = 0.01;
  const auto train_stream = pattern_stream(2000, 11);
  const auto valid = pattern_stream(400, 12);
  const ModelParams params = train(model, config, train_stream, valid, 9).best.params;

  const std::vector<double> grid = default_temperature_grid();
  const TemperatureSearch search = tune_temperature(params, model, valid, grid);
  // Exhaustive recomputation with the documented tie rule.
  double best_t = grid.front(), best_nll = std::numeric_limits<double>::infinity();
  for (double t : grid) {
    const double nll = evaluate_static(params, model, valid, t).nats_per_token;
    const bool better = nll < best_nll ||
                        (nll == best_nll && (std::abs(t - 1.0) < std::abs(best_t - 1.0) ||
                                             (std::abs(t - 1.0) == std::abs(best_t - 1.0) && t < best_t)));
    if (better) {
      best_nll = nll;
      best_t = t;
    }
  }
  const double at_one = evaluate_static(params, model, valid, 1.0).nats_per_token;
  const double tuned = evaluate_static(params, model, valid, search.best).nats_per_token;
  return {search.best == best_t && tuned <= at_one,
          "chosen " + fmt("%.2f", search.best) + " (oracle " + fmt("%.2f", best_t) + "), nll " + fmt("%.6f", tuned) +
              " vs " + fmt("%.6f", at_one) + " at 1"};
}

// --- 10 ----------------------------------------------------------------

Outcome determinism() {
  const auto dir = scratch("determinism");
  std::string text;
  const char* words[] = {"to ", "be ", "or ", "not ", "that ", "is ", "the ", "question\n"};
  Rng rng(10);
  while (text.size() < 4000) text += words[rng.next_u64() % 8];
  spit(dir / "train.txt", text.substr(0, 3000));
  spit(dir / "valid.txt", text.substr(3000, 500));
  spit(dir / "test.txt", text.substr(3500));
  spit(dir / "run.ini",
       "[data]\ntrain = train.txt\nvalid = valid.txt\ntest = test.txt\n"
       "[model]\nlayers = 2\nhidden = 16\nmogrifier_rounds = 3\nkeep_input = 0.8\nkeep_cell = 0.8\n"
       "keep_state = 0.8\nkeep_output = 0.8\ndropout_samples = 2\n"
       "[train]\nepochs = 2\nbatch_size = 4\nbptt = 20\nlr = 0.005\nvalidate_every = 10\n");
  if (cli({"train", "--config", (dir / "run.ini").string()}) != 0) return {false, "first run failed"};
  const std::string log_a = slurp(dir / "metrics.log");
  const std::string ckpt_a = slurp(dir / "best.ckpt");
  if (cli({"train", "--config", (dir / "run.ini").string()}) != 0) return {false, "second run failed"};
  const std::string log_b = slurp(dir / "metrics.log");
  const bool logs_equal = log_a == log_b && slurp(dir / "best.ckpt") == ckpt_a;

  save_checkpoint(load_checkpoint(dir / "best.ckpt"), dir / "again.ckpt");
  const bool round_trip = slurp(dir / "again.ckpt") == ckpt_a &&
                          serialize_checkpoint(deserialize_checkpoint(ckpt_a)) == ckpt_a;
  const std::size_t records = static_cast<std::size_t>(std::count(log_a.begin(), log_a.end(), '\n'));
  std::filesystem::remove_all(dir);
  return {logs_equal && round_trip, std::string("metrics logs ") + (logs_equal ? "identical" : "differ") + " (" +
                                        std::to_string(records) + " lines), checkpoint round trip " +
                                        (round_trip ? "identical" : "differs")};
}

// --- 11 ----------------------------------------------------------------

Outcome metric_conversions() {
  const Metrics word = convert_metrics(3.93124);
  const Metrics chars = convert_metrics(0.78415);
  return {std::abs(word.perplexity - 50.97) <= 0.01 && std::abs(chars.bpc - 1.1313) <= 0.0001,
          "perplexity " + fmt("%.4f", word.perplexity) + ", bpc " + fmt("%.5f", chars.bpc)};
}

}  // namespace

int main(int argc, char** argv) {
  std::filesystem::path configs = RNNLAB_CONFIG_DIR;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"bounded cell state", bounded_state},
      {"multi-sample objective", multisample},
      {"two-tailed averaging", tta_oracle},
      {"RAdam rectification boundary", radam_boundary},
      {"restart rule", restart_rule},
      {"desk-scale training", [&] { return desk_training(configs); }},
      {"dynamic evaluation", dynamic_evaluation},
      {"temperature tuning", temperature_tuning},
      {"determinism", determinism},
      {"metric conversions", metric_conversions},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && !only.contains(number)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d %s: %s: %s (%.1f s)\n", number, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
