// Binary layout, all integers and floats little-endian:
//   "RNNLABCK"  u32 version
//   model config  (u64 layers, hidden, vocab; u8 cell, cap; u64 rounds, rank;
//                  f64 keep_input, keep_cell, keep_state, keep_output;
//                  u8 tie, row_dropout, embedding_in_residual; u64 samples; f64 chrono_t_max)
//   u64 step, epoch, restarts; f64 best_valid_loss, learning_rate; u64 rng seed, rng counter
//   tensors  params
//   u64 optimizer step; f64 beta1, beta2, eps, lr; tensors m; tensors v
//   2 x (u64 start, count; u8 has_mean; [tensors mean])   long tail, then short tail
// where "tensors" is u64 count followed by (u64 rows, u64 cols, f64 values...) each.

#include <bit>
#include <fstream>
#include <sstream>

#include "rnnlab/training.hpp"

namespace rnnlab {

namespace {

constexpr char kMagic[8] = {'R', 'N', 'N', 'L', 'A', 'B', 'C', 'K'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void boolean(bool v) { u8(v ? 1 : 0); }
  void tensors(const ModelParams& p) {
    const auto list = rnnlab::tensors(p);
    u64(list.size());
    for (const Matrix* m : list) {
      u64(m->rows());
      u64(m->cols());
      for (double v : m->data()) f64(v);
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() {
    if (pos_ >= in_.size()) throw CheckpointError("checkpoint is truncated");
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(u8()) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(u8()) << (8 * k);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  bool boolean() {
    const std::uint8_t v = u8();
    if (v > 1) throw CheckpointError("checkpoint has a corrupt flag byte");
    return v == 1;
  }
  std::size_t size() {
    const std::uint64_t v = u64();
    if (v > (std::uint64_t{1} << 40)) throw CheckpointError("checkpoint has an implausible size field");
    return static_cast<std::size_t>(v);
  }
  /// Reads tensors into `p`, whose layout fixes the expected shapes.
  void tensors(ModelParams& p) {
    const auto list = rnnlab::tensors(p);
    if (size() != list.size()) throw CheckpointError("checkpoint tensor count does not match its model");
    for (Matrix* m : list) {
      const std::size_t rows = size();
      const std::size_t cols = size();
      if (rows != m->rows() || cols != m->cols()) {
        throw CheckpointError("checkpoint tensor is " + std::to_string(rows) + "x" + std::to_string(cols) +
                              ", expected " + m->shape_string());
      }
      for (double& v : m->data()) v = f64();
    }
  }
  void expect_end() const {
    if (pos_ != in_.size()) throw CheckpointError("checkpoint has trailing bytes");
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > in_.size()) throw CheckpointError("checkpoint is truncated");
    const std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(c.version);
  const ModelConfig& m = c.model;
  w.u64(m.layers);
  w.u64(m.hidden);
  w.u64(m.vocab);
  w.u8(m.cell == CellKind::lstm ? 0 : 1);
  w.boolean(m.cap_input_gate);
  w.u64(m.mogrifier_rounds);
  w.u64(m.mogrifier_rank);
  w.f64(m.keep_input);
  w.f64(m.keep_cell);
  w.f64(m.keep_state);
  w.f64(m.keep_output);
  w.boolean(m.tie_embeddings);
  w.boolean(m.input_row_dropout);
  w.boolean(m.embedding_in_residual);
  w.u64(m.dropout_samples);
  w.f64(m.chrono_t_max);

  w.u64(c.step);
  w.u64(c.epoch);
  w.u64(c.restarts);
  w.f64(c.best_valid_loss);
  w.f64(c.learning_rate);
  w.u64(c.rng.seed);
  w.u64(c.rng.counter);
  w.tensors(c.params);

  w.u64(c.optimizer.step);
  w.f64(c.optimizer.beta1);
  w.f64(c.optimizer.beta2);
  w.f64(c.optimizer.eps);
  w.f64(c.optimizer.lr);
  w.tensors(c.optimizer.m);
  w.tensors(c.optimizer.v);

  for (const TtaTail* tail : {&c.tta.long_tail, &c.tta.short_tail}) {
    w.u64(tail->start);
    w.u64(tail->count);
    w.boolean(tail->count > 0);
    if (tail->count > 0) w.tensors(tail->mean);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic || r.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw CheckpointError("not a checkpoint file (bad magic bytes)");
  }
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(c.version) +
                          " is not supported; this build reads version " + std::to_string(kCheckpointVersion));
  }
  ModelConfig& m = c.model;
  m.layers = r.size();
  m.hidden = r.size();
  m.vocab = r.size();
  const std::uint8_t cell = r.u8();
  if (cell > 1) throw CheckpointError("checkpoint has an unknown cell kind");
  m.cell = cell == 0 ? CellKind::lstm : CellKind::rlstm;
  m.cap_input_gate = r.boolean();
  m.mogrifier_rounds = r.size();
  m.mogrifier_rank = r.size();
  m.keep_input = r.f64();
  m.keep_cell = r.f64();
  m.keep_state = r.f64();
  m.keep_output = r.f64();
  m.tie_embeddings = r.boolean();
  m.input_row_dropout = r.boolean();
  m.embedding_in_residual = r.boolean();
  m.dropout_samples = r.size();
  m.chrono_t_max = r.f64();
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint holds an invalid model configuration: ") + e.what());
  }

  c.step = r.u64();
  c.epoch = r.u64();
  c.restarts = r.u64();
  c.best_valid_loss = r.f64();
  c.learning_rate = r.f64();
  c.rng.seed = r.u64();
  c.rng.counter = r.u64();
  c.params = zero_model_params(m);
  r.tensors(c.params);

  c.optimizer.step = r.u64();
  c.optimizer.beta1 = r.f64();
  c.optimizer.beta2 = r.f64();
  c.optimizer.eps = r.f64();
  c.optimizer.lr = r.f64();
  c.optimizer.m = zero_model_params(m);
  c.optimizer.v = zero_model_params(m);
  r.tensors(c.optimizer.m);
  r.tensors(c.optimizer.v);

  for (TtaTail* tail : {&c.tta.long_tail, &c.tta.short_tail}) {
    tail->start = r.u64();
    tail->count = r.u64();
    const bool has_mean = r.boolean();
    if (has_mean != (tail->count > 0)) throw CheckpointError("checkpoint tail count and mean disagree");
    if (has_mean) {
      tail->mean = zero_model_params(m);
      r.tensors(tail->mean);
    }
  }
  r.expect_end();
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  // Write to a sibling file first so a failed write never leaves a partial checkpoint.
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace rnnlab
