#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rnnlab/model.hpp"

namespace rnnlab {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class VocabMode { byte, character, word };

std::string to_string(VocabMode mode);
VocabMode parse_vocab_mode(std::string_view text);

using TokenStream = std::vector<std::int32_t>;

class Vocab {
 public:
  static constexpr std::string_view kUnknown = "<unk>";
  static constexpr std::string_view kEndOfSentence = "<eos>";

  Vocab() = default;
  Vocab(VocabMode mode, std::vector<std::string> symbols);

  /// Byte mode: the byte values present, in increasing order.
  /// Char mode: the Unicode scalar values present, in increasing order.
  /// Word mode: <unk>, <eos>, then whitespace tokens in order of first use.
  static Vocab build(std::string_view text, VocabMode mode);

  VocabMode mode() const { return mode_; }
  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(std::int32_t id) const;
  const std::vector<std::string>& symbols() const { return symbols_; }
  /// Throws DataError for unknown symbols outside word mode.
  std::int32_t id(std::string_view symbol) const;
  bool contains(std::string_view symbol) const { return ids_.contains(std::string(symbol)); }
  std::int32_t unknown_id() const;
  std::int32_t eos_id() const;

  TokenStream encode(std::string_view text) const;
  /// Word mode joins tokens with single spaces and turns <eos> into a newline.
  std::string decode(std::span<const std::int32_t> ids) const;

  /// One escaped symbol per line; line k holds id k.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path, VocabMode mode);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.mode_ == b.mode_ && a.symbols_ == b.symbols_;
  }

 private:
  VocabMode mode_ = VocabMode::byte;
  std::vector<std::string> symbols_;
  std::map<std::string, std::int32_t, std::less<>> ids_;
};

/// Splits UTF-8 text into one string per code point. Throws on malformed input.
std::vector<std::string> utf8_characters(std::string_view text);
std::vector<std::string> word_tokens(std::string_view text);

std::string escape_symbol(std::string_view symbol);
std::string unescape_symbol(std::string_view line);

std::string read_text_file(const std::filesystem::path& path);

struct Corpus {
  Vocab vocab;
  TokenStream train;
  TokenStream valid;
  TokenStream test;
};

/// Word mode builds the vocabulary from the training split alone. Byte and
/// char modes take the symbol inventory of all three splits so that no
/// evaluation symbol is unencodable.
Corpus load_corpus(const std::filesystem::path& train, const std::filesystem::path& valid,
                   const std::filesystem::path& test, VocabMode mode);

/// B contiguous rows of the stream, truncated to a multiple of B.
struct BatchedStream {
  std::size_t rows = 0;
  std::size_t length = 0;  // tokens per row
  TokenStream data;        // row-major

  std::int32_t at(std::size_t row, std::size_t i) const { return data[row * length + i]; }
};

BatchedStream batchify(std::span<const std::int32_t> stream, std::size_t rows);

/// Windows of at most `steps` positions; each row of length L yields L - 1
/// (input, target) pairs, so the last window may be shorter.
std::size_t window_count(const BatchedStream& batched, std::size_t steps);
WindowBatch window_at(const BatchedStream& batched, std::size_t steps, std::size_t index);

}  // namespace rnnlab
