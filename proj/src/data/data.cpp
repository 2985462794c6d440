#include "rnnlab/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace rnnlab {

std::string to_string(VocabMode mode) {
  switch (mode) {
    case VocabMode::byte: return "byte";
    case VocabMode::character: return "char";
    case VocabMode::word: return "word";
  }
  return "?";
}

VocabMode parse_vocab_mode(std::string_view text) {
  if (text == "byte") return VocabMode::byte;
  if (text == "char") return VocabMode::character;
  if (text == "word") return VocabMode::word;
  throw InvalidArgument("unknown vocabulary mode '" + std::string(text) + "' (byte, char or word)");
}

std::vector<std::string> utf8_characters(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
    } else {
      throw DataError("malformed UTF-8 at byte " + std::to_string(i));
    }
    if (i + len > text.size()) throw DataError("truncated UTF-8 sequence at byte " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) throw DataError("malformed UTF-8 at byte " + std::to_string(i + k));
      cp = (cp << 6) | (cont & 0x3F);
    }
    static constexpr std::uint32_t kMinimum[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMinimum[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw DataError("invalid code point at byte " + std::to_string(i));
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

// Unicode scalar value of a single UTF-8 character (already validated).
std::uint32_t code_point(std::string_view ch) {
  const auto lead = static_cast<unsigned char>(ch[0]);
  if (ch.size() == 1) return lead;
  std::uint32_t cp = lead & (0xFF >> (ch.size() + 1));
  for (std::size_t k = 1; k < ch.size(); ++k) cp = (cp << 6) | (static_cast<unsigned char>(ch[k]) & 0x3F);
  return cp;
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && is_space(line[i])) ++i;
      std::size_t j = i;
      while (j < line.size() && !is_space(line[j])) ++j;
      if (j > i) out.emplace_back(line.substr(i, j - i));
      i = j;
    }
    out.emplace_back(Vocab::kEndOfSentence);
    start = end + 1;
  }
  return out;
}

Vocab::Vocab(VocabMode mode, std::vector<std::string> symbols) : mode_(mode), symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) throw DataError("empty vocabulary symbol at id " + std::to_string(i));
    if (mode_ == VocabMode::byte && symbols_[i].size() != 1) {
      throw DataError("byte vocabulary symbol " + std::to_string(i) + " is not a single byte");
    }
    if (!ids_.emplace(symbols_[i], static_cast<std::int32_t>(i)).second) {
      throw DataError("duplicate vocabulary symbol '" + escape_symbol(symbols_[i]) + "'");
    }
  }
  if (mode_ == VocabMode::word &&
      (symbols_.size() < 2 || symbols_[0] != kUnknown || symbols_[1] != kEndOfSentence)) {
    throw DataError("word vocabulary must start with <unk> and <eos>");
  }
}

Vocab Vocab::build(std::string_view text, VocabMode mode) {
  if (text.empty()) throw DataError("cannot build a vocabulary from empty text");
  std::vector<std::string> symbols;
  switch (mode) {
    case VocabMode::byte: {
      std::set<unsigned char> present(text.begin(), text.end());
      for (unsigned char b : present) symbols.emplace_back(1, static_cast<char>(b));
      break;
    }
    case VocabMode::character: {
      std::map<std::uint32_t, std::string> present;
      for (std::string& ch : utf8_characters(text)) {
        const std::uint32_t cp = code_point(ch);
        present.emplace(cp, std::move(ch));
      }
      for (auto& [cp, ch] : present) symbols.push_back(std::move(ch));
      break;
    }
    case VocabMode::word: {
      symbols = {std::string(kUnknown), std::string(kEndOfSentence)};
      std::set<std::string, std::less<>> seen(symbols.begin(), symbols.end());
      for (std::string& token : word_tokens(text)) {
        if (seen.insert(token).second) symbols.push_back(std::move(token));
      }
      break;
    }
  }
  return Vocab(mode, std::move(symbols));
}

const std::string& Vocab::symbol(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::int32_t Vocab::id(std::string_view symbol) const {
  const auto it = ids_.find(symbol);
  if (it != ids_.end()) return it->second;
  if (mode_ == VocabMode::word) return unknown_id();
  throw DataError("symbol '" + escape_symbol(symbol) + "' is not in the vocabulary");
}

std::int32_t Vocab::unknown_id() const {
  if (mode_ != VocabMode::word) throw DataError("only word vocabularies have <unk>");
  return 0;
}

std::int32_t Vocab::eos_id() const {
  if (mode_ != VocabMode::word) throw DataError("only word vocabularies have <eos>");
  return 1;
}

TokenStream Vocab::encode(std::string_view text) const {
  TokenStream out;
  switch (mode_) {
    case VocabMode::byte:
      out.reserve(text.size());
      for (char c : text) out.push_back(id(std::string_view(&c, 1)));
      break;
    case VocabMode::character:
      for (const std::string& ch : utf8_characters(text)) out.push_back(id(ch));
      break;
    case VocabMode::word:
      for (const std::string& token : word_tokens(text)) out.push_back(id(token));
      break;
  }
  return out;
}

std::string Vocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (std::int32_t id : ids) {
    const std::string& s = symbol(id);
    if (mode_ != VocabMode::word) {
      out += s;
    } else if (id == eos_id()) {
      out += '\n';
    } else {
      if (!out.empty() && out.back() != '\n') out += ' ';
      out += s;
    }
  }
  return out;
}

std::string escape_symbol(std::string_view symbol) {
  std::string out;
  for (char c : symbol) {
    const auto u = static_cast<unsigned char>(c);
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\r') {
      out += "\\r";
    } else if (c == '\t') {
      out += "\\t";
    } else if (u < 0x20 || u == 0x7F || (u >= 0x80 && symbol.size() == 1)) {
      // A lone high byte is not valid UTF-8 on its own line, so it is escaped too.
      char buf[5];
      std::snprintf(buf, sizeof buf, "\\x%02X", u);
      out += buf;
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape_symbol(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '\\') {
      out += line[i];
      continue;
    }
    if (++i == line.size()) throw DataError("dangling backslash in '" + std::string(line) + "'");
    switch (line[i]) {
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 't': out += '\t'; break;
      case 'x': {
        if (i + 2 >= line.size()) {
          throw DataError("short \\x escape in '" + std::string(line) + "'");
        }
        const std::string hex(line.substr(i + 1, 2));
        std::size_t used = 0;
        int value = 0;
        try {
          value = std::stoi(hex, &used, 16);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != 2) throw DataError("bad \\x escape in '" + std::string(line) + "'");
        out += static_cast<char>(value);
        i += 2;
        break;
      }
      default: throw DataError("unknown escape in '" + std::string(line) + "'");
    }
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const std::string& s : symbols_) out << escape_symbol(s) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path, VocabMode mode) {
  const std::string text = read_text_file(path);
  std::vector<std::string> symbols;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    symbols.push_back(unescape_symbol(std::string_view(text).substr(start, end - start)));
    start = end + 1;
  }
  return Vocab(mode, std::move(symbols));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Corpus load_corpus(const std::filesystem::path& train, const std::filesystem::path& valid,
                   const std::filesystem::path& test, VocabMode mode) {
  const std::string train_text = read_text_file(train);
  const std::string valid_text = read_text_file(valid);
  const std::string test_text = read_text_file(test);
  for (const auto& [text, path] : {std::pair{&train_text, &train}, {&valid_text, &valid}, {&test_text, &test}}) {
    if (text->empty()) throw DataError(path->string() + " is empty");
  }
  Corpus corpus;
  corpus.vocab = mode == VocabMode::word ? Vocab::build(train_text, mode)
                                         : Vocab::build(train_text + valid_text + test_text, mode);
  corpus.train = corpus.vocab.encode(train_text);
  corpus.valid = corpus.vocab.encode(valid_text);
  corpus.test = corpus.vocab.encode(test_text);
  return corpus;
}

BatchedStream batchify(std::span<const std::int32_t> stream, std::size_t rows) {
  if (rows == 0) throw DataError("batchify: rows must be positive");
  if (stream.size() < rows) {
    throw DataError("batchify: stream of " + std::to_string(stream.size()) + " tokens is shorter than " +
                    std::to_string(rows) + " rows");
  }
  BatchedStream out;
  out.rows = rows;
  out.length = stream.size() / rows;
  out.data.assign(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(rows * out.length));
  return out;
}

std::size_t window_count(const BatchedStream& batched, std::size_t steps) {
  if (steps == 0) throw DataError("window length must be at least 1");
  if (batched.length < 2) return 0;
  return (batched.length - 1 + steps - 1) / steps;
}

WindowBatch window_at(const BatchedStream& batched, std::size_t steps, std::size_t index) {
  if (index >= window_count(batched, steps)) throw DataError("window index out of range");
  const std::size_t start = index * steps;
  const std::size_t len = std::min(steps, batched.length - 1 - start);
  WindowBatch w{batched.rows, len, {}, {}};
  w.inputs.reserve(batched.rows * len);
  w.targets.reserve(batched.rows * len);
  for (std::size_t b = 0; b < batched.rows; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      w.inputs.push_back(batched.at(b, start + t));
      w.targets.push_back(batched.at(b, start + t + 1));
    }
  }
  return w;
}

}  // namespace rnnlab
