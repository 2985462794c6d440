#include "rnnlab/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <type_traits>

#include "rnnlab/cells.hpp"
#include "rnnlab/finite_difference.hpp"
#include "rnnlab/model.hpp"
#include "rnnlab/mogrifier.hpp"

namespace rnnlab {

namespace {

constexpr double kStep = 1e-5;

void append(const Matrix& m, std::vector<double>& out) { out.insert(out.end(), m.data().begin(), m.data().end()); }

void read(Matrix& m, std::span<const double> values, std::size_t& offset) {
  for (double& v : m.data()) v = values[offset++];
}

template <class Params>
void append_all(const Params& p, std::vector<double>& out) {
  if constexpr (std::is_same_v<Params, CellParams>) {
    for_each_tensor(p, [&](auto, const Matrix& m) { append(m, out); });
  } else {
    p.for_each([&](auto, const Matrix& m) { append(m, out); });
  }
}

template <class Params>
void read_all(Params& p, std::span<const double> values, std::size_t& offset) {
  if constexpr (std::is_same_v<Params, CellParams>) {
    for_each_tensor(p, [&](auto, Matrix& m) { read(m, values, offset); });
  } else {
    p.for_each([&](auto, Matrix& m) { read(m, values, offset); });
  }
}

double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void corrupt_if(bool corrupt, std::vector<double>& analytic) {
  if (corrupt && !analytic.empty()) analytic[0] += 0.01 * (std::abs(analytic[0]) + 1.0);
}

double check_cell(Rng& rng, CellKind kind, bool capped, bool masked, bool corrupt) {
  const std::size_t batch = 2, m = 5, n = 4;
  CellParams params = zero_cell_params(kind, m, n);
  for_each_tensor(params, [&](auto, Matrix& t) { t = uniform_matrix(rng, t.rows(), t.cols(), -1.0, 1.0); });
  const CellState prev{uniform_matrix(rng, batch, n, -0.9, 0.9), uniform_matrix(rng, batch, n, -0.9, 0.9)};
  const Matrix x = uniform_matrix(rng, batch, m, -1.0, 1.0);
  const Matrix mask = masked ? bernoulli_mask(rng, batch, n, 0.5) : Matrix();
  const Matrix r_c = uniform_matrix(rng, batch, n, -1.0, 1.0);
  const Matrix r_h = uniform_matrix(rng, batch, n, -1.0, 1.0);

  std::vector<double> theta;
  append_all(params, theta);
  append(prev.c, theta);
  append(prev.h, theta);
  append(x, theta);
  const auto objective = [&](std::span<const double> values) {
    CellParams p = params;
    CellState s = prev;
    Matrix input = x;
    std::size_t offset = 0;
    read_all(p, values, offset);
    read(s.c, values, offset);
    read(s.h, values, offset);
    read(input, values, offset);
    const CellStep step = cell_forward(p, s, input, capped, mask);
    return dot(r_c, step.state.c) + dot(r_h, step.state.h);
  };

  const CellStep step = cell_forward(params, prev, x, capped, mask);
  const CellGradients g = cell_backward(params, step.cache, r_c, r_h);
  std::vector<double> analytic;
  append_all(g.params, analytic);
  append(g.c_prev, analytic);
  append(g.h_prev, analytic);
  append(g.x, analytic);
  corrupt_if(corrupt, analytic);
  return max_relative_error(analytic, finite_difference_gradient(objective, theta, kStep));
}

double check_mogrifier(Rng& rng, std::size_t rounds, std::size_t rank, bool corrupt) {
  const std::size_t batch = 2, m = 5, n = 4;
  MogrifierParams params = zero_mogrifier_params(m, n, rounds, rank);
  params.for_each([&](auto, Matrix& t) { t = uniform_matrix(rng, t.rows(), t.cols(), -1.0, 1.0); });
  const Matrix h = uniform_matrix(rng, batch, n, -1.0, 1.0);
  const Matrix x = uniform_matrix(rng, batch, m, -1.0, 1.0);
  const Matrix r_h = uniform_matrix(rng, batch, n, -1.0, 1.0);
  const Matrix r_x = uniform_matrix(rng, batch, m, -1.0, 1.0);

  std::vector<double> theta;
  append_all(params, theta);
  append(h, theta);
  append(x, theta);
  const auto objective = [&](std::span<const double> values) {
    MogrifierParams p = params;
    Matrix hh = h, xx = x;
    std::size_t offset = 0;
    read_all(p, values, offset);
    read(hh, values, offset);
    read(xx, values, offset);
    const MogrifyResult out = mogrify_forward(p, hh, xx);
    return dot(r_h, out.h) + dot(r_x, out.x);
  };
  const MogrifyResult out = mogrify_forward(params, h, x);
  const MogrifyGradients g = mogrify_backward(params, out.cache, r_h, r_x);
  std::vector<double> analytic;
  append_all(g.params, analytic);
  append(g.h, analytic);
  append(g.x, analytic);
  corrupt_if(corrupt, analytic);
  return max_relative_error(analytic, finite_difference_gradient(objective, theta, kStep));
}

double check_model(Rng& rng, ModelConfig config, bool corrupt) {
  const std::size_t batch = 1, steps = 4;
  ModelParams params = init_model_params(rng, config);
  params.for_each([&](const std::string&, Matrix& t) { t = uniform_matrix(rng, t.rows(), t.cols(), -0.5, 0.5); });
  WindowBatch window{batch, steps, {}, {}};
  for (std::size_t i = 0; i < batch * steps; ++i) {
    window.inputs.push_back(static_cast<std::int32_t>(rng.next_u64() % config.vocab));
    window.targets.push_back(static_cast<std::int32_t>(rng.next_u64() % config.vocab));
  }
  ModelState initial;
  for (std::size_t l = 0; l < config.layers; ++l) {
    initial.push_back({uniform_matrix(rng, batch, config.hidden, -0.5, 0.5),
                       uniform_matrix(rng, batch, config.hidden, -0.5, 0.5)});
  }
  // Masks are drawn once and held fixed so the objective is deterministic.
  const MaskSet masks = sample_masks(rng, config, batch, steps);
  std::vector<Matrix> direction;
  for (std::size_t t = 0; t < steps; ++t) direction.push_back(uniform_matrix(rng, batch, config.vocab, -1.0, 1.0));

  const auto objective = [&](std::span<const double> values) {
    ModelParams p = params;
    assign(p, values);
    const ForwardResult fwd = forward_window(p, config, window, initial, masks, 1.0, false);
    double total = 0.0;
    for (std::size_t t = 0; t < steps; ++t) total += dot(direction[t], fwd.log_probs[t]);
    return total;
  };
  const ForwardResult fwd = forward_window(params, config, window, initial, masks);
  std::vector<double> analytic = flatten(backward_window(params, config, fwd, direction));
  corrupt_if(corrupt, analytic);
  return max_relative_error(analytic, finite_difference_gradient(objective, flatten(params), kStep));
}

ModelConfig small_model(CellKind kind) {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 8;
  c.vocab = 6;
  c.cell = kind;
  c.mogrifier_rounds = 2;
  c.keep_input = c.keep_cell = c.keep_state = c.keep_output = 0.7;
  return c;
}

struct Component {
  std::string name;
  std::function<double(Rng&, bool)> run;
};

std::vector<Component> components() {
  std::vector<Component> out{
      {"lstm_uncapped", [](Rng& r, bool c) { return check_cell(r, CellKind::lstm, false, false, c); }},
      {"lstm_capped", [](Rng& r, bool c) { return check_cell(r, CellKind::lstm, true, false, c); }},
      {"rlstm", [](Rng& r, bool c) { return check_cell(r, CellKind::rlstm, true, false, c); }},
      {"rlstm_state_mask", [](Rng& r, bool c) { return check_cell(r, CellKind::rlstm, true, true, c); }},
  };
  for (std::size_t rounds : {1u, 2u, 5u}) {
    out.push_back({"mogrifier_r" + std::to_string(rounds),
                   [rounds](Rng& r, bool c) { return check_mogrifier(r, rounds, 0, c); }});
    out.push_back({"mogrifier_r" + std::to_string(rounds) + "_low_rank",
                   [rounds](Rng& r, bool c) { return check_mogrifier(r, rounds, 2, c); }});
  }
  out.push_back({"model_lstm", [](Rng& r, bool c) { return check_model(r, small_model(CellKind::lstm), c); }});
  out.push_back({"model_rlstm", [](Rng& r, bool c) { return check_model(r, small_model(CellKind::rlstm), c); }});
  out.push_back({"model_rlstm_tied_low_rank", [](Rng& r, bool c) {
                   ModelConfig config = small_model(CellKind::rlstm);
                   config.tie_embeddings = true;
                   config.mogrifier_rank = 2;
                   config.mogrifier_rounds = 3;
                   return check_model(r, config, c);
                 }});
  return out;
}

}  // namespace

std::vector<std::string> gradcheck_components() {
  std::vector<std::string> names;
  for (const Component& c : components()) names.push_back(c.name);
  return names;
}

std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  const std::vector<Component> list = components();
  if (!corrupt.empty()) {
    bool known = false;
    for (const Component& c : list) known = known || c.name == corrupt;
    if (!known) throw InvalidArgument("unknown gradcheck component '" + corrupt + "'");
  }
  std::vector<GradcheckResult> results;
  Rng rng(seed);
  for (const Component& c : list) {
    Rng local = rng.split();
    results.push_back({c.name, c.run(local, c.name == corrupt)});
  }
  return results;
}

}  // namespace rnnlab
