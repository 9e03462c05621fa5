#pragma once

// Corpus ingestion: tweet normalization, tokenization, vocabulary and label
// space construction, and label co-occurrence counting.
//
// Corpus files are JSONL, one {"text": "...", "labels": ["joy", ...]} per
// line. Blank lines are skipped.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "errors.hpp"

namespace emograph {

using TokenId = std::size_t;
using LabelRow = std::vector<std::uint8_t>;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kUrlToken = "<url>";
inline constexpr std::string_view kUserToken = "<user>";
inline constexpr std::string_view kNumToken = "<num>";

// ---------------------------------------------------------------------------
// LabelSpace

class LabelSpace {
 public:
  LabelSpace() = default;

  explicit LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2) {
      throw ContractError("LabelSpace: need at least 2 labels, got " +
                          std::to_string(names_.size()));
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], i).second) {
        throw ContractError("LabelSpace: duplicate label '" + names_[i] + "'");
      }
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw ContractError("unknown label '" + std::string(name) + "'");
  }

  friend bool operator==(const LabelSpace& a, const LabelSpace& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One label name per line; blank lines ignored.
inline LabelSpace read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    if (b < line.size()) names.push_back(line.substr(b));
  }
  return LabelSpace(std::move(names));
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace detail {

inline bool is_ascii_letter(unsigned char c) { return std::isalpha(c) != 0; }
inline bool is_letterlike(unsigned char c) { return is_ascii_letter(c) || c >= 0x80 || c == '_'; }
inline bool is_word(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }
inline bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

inline bool starts_with_at(std::string_view s, std::size_t i, std::string_view prefix) {
  return s.substr(i, prefix.size()) == prefix;
}

inline bool starts_url(std::string_view s, std::size_t i) {
  return starts_with_at(s, i, "http://") || starts_with_at(s, i, "https://") ||
         starts_with_at(s, i, "www.");
}

}  // namespace detail

/// Tweet normalization, applied in this order:
///   1. ASCII lowercase
///   2. drop every '#'
///   3. http://, https://, www. up to the next whitespace -> <url>
///   4. '@' followed by word characters -> <user>
///   5. digit runs (optionally one internal '.' or ',' followed by digits)
///      not touching a letter on either side -> <num>
/// Punctuation is otherwise preserved ("!!" stays "!!").
inline std::string preprocess(std::string_view raw) {
  using namespace detail;
  std::string s;
  s.reserve(raw.size());
  for (char ch : raw) {
    if (ch == '#') continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }

  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (starts_url(s, i)) {
      while (i < s.size() && !is_space(static_cast<unsigned char>(s[i]))) ++i;
      out += kUrlToken;
      continue;
    }
    if (c == '@' && i + 1 < s.size() && is_word(static_cast<unsigned char>(s[i + 1]))) {
      ++i;
      while (i < s.size() && is_word(static_cast<unsigned char>(s[i]))) ++i;
      out += kUserToken;
      continue;
    }
    if (is_digit(c)) {
      std::size_t j = i;
      while (j < s.size() && is_digit(static_cast<unsigned char>(s[j]))) ++j;
      if (j + 1 < s.size() && (s[j] == '.' || s[j] == ',') &&
          is_digit(static_cast<unsigned char>(s[j + 1]))) {
        ++j;
        while (j < s.size() && is_digit(static_cast<unsigned char>(s[j]))) ++j;
      }
      const bool left_attached = i > 0 && is_letterlike(static_cast<unsigned char>(s[i - 1]));
      // A URL directly after the digits is about to become "<url>", which
      // does not attach; judging by its first letter would break idempotence.
      const bool right_attached =
          j < s.size() && is_letterlike(static_cast<unsigned char>(s[j])) && !starts_url(s, j);
      if (left_attached || right_attached) {
        out.append(s, i, j - i);
      } else {
        out += kNumToken;
      }
      i = j;
      continue;
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

/// Whitespace split, then leading/trailing characters from .,!?;:'"() are
/// peeled off one per token. <url>, <user>, <num> are atomic.
inline std::vector<std::string> tokenize(std::string_view clean) {
  static constexpr std::string_view kPunct = ".,!?;:'\"()";
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < clean.size()) {
    while (i < clean.size() && detail::is_space(static_cast<unsigned char>(clean[i]))) ++i;
    std::size_t j = i;
    while (j < clean.size() && !detail::is_space(static_cast<unsigned char>(clean[j]))) ++j;
    if (j == i) break;
    std::string_view word = clean.substr(i, j - i);
    i = j;

    std::vector<std::string> trailing;
    while (!word.empty() && kPunct.find(word.front()) != std::string_view::npos) {
      tokens.emplace_back(1, word.front());
      word.remove_prefix(1);
    }
    while (!word.empty() && kPunct.find(word.back()) != std::string_view::npos) {
      trailing.emplace_back(1, word.back());
      word.remove_suffix(1);
    }
    if (!word.empty()) tokens.emplace_back(word);
    tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kUrl = 2;
  static constexpr TokenId kUser = 3;
  static constexpr TokenId kNum = 4;

  Vocabulary() {
    for (auto t : {kPadToken, kUnkToken, kUrlToken, kUserToken, kNumToken}) add(std::string(t));
  }

  /// Reserved tokens must come first, in order.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    if (tokens.size() < 5) throw FormatError("vocabulary: missing reserved tokens");
    for (std::size_t i = 0; i < 5; ++i) {
      if (tokens[i] != v.id_to_token_[i]) {
        throw FormatError("vocabulary: reserved token " + std::to_string(i) + " must be '" +
                          v.id_to_token_[i] + "', found '" + tokens[i] + "'");
      }
    }
    for (std::size_t i = 5; i < tokens.size(); ++i) {
      if (v.token_to_id_.count(tokens[i])) throw FormatError("vocabulary: duplicate token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  /// Tokens with count >= min_freq, most frequent first, ties by byte order.
  static Vocabulary build(const std::vector<std::vector<std::string>>& token_lists,
                          std::size_t min_freq = 2) {
    std::map<std::string, std::size_t> counts;
    for (const auto& toks : token_lists)
      for (const auto& t : toks) ++counts[t];
    std::vector<std::pair<std::string, std::size_t>> kept;
    Vocabulary v;
    for (auto& [tok, c] : counts) {
      if (c >= min_freq && !v.token_to_id_.count(tok)) kept.emplace_back(tok, c);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (auto& [tok, c] : kept) v.add(tok);
    return v;
  }

  std::size_t size() const noexcept { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }
  const std::string& token(TokenId id) const { return id_to_token_.at(id); }

  TokenId id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  nlohmann::json to_json() const { return {{"tokens", id_to_token_}}; }

  static Vocabulary from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
      throw FormatError("vocabulary: expected {\"tokens\": [...]}");
    }
    return from_tokens(j["tokens"].get<std::vector<std::string>>());
  }

 private:
  void add(std::string tok) {
    token_to_id_.emplace(tok, id_to_token_.size());
    id_to_token_.push_back(std::move(tok));
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// ---------------------------------------------------------------------------
// Examples and co-occurrence

struct Example {
  std::string raw_text;
  std::vector<TokenId> tokens;
  LabelRow labels;
};

/// Symmetric label co-occurrence counts; diagonal holds per-class totals.
class CooccurrenceMatrix {
 public:
  CooccurrenceMatrix() = default;
  explicit CooccurrenceMatrix(std::size_t n) : n_(n), counts_(n * n, 0) {}

  CooccurrenceMatrix(std::size_t n, std::vector<std::uint64_t> counts)
      : n_(n), counts_(std::move(counts)) {
    if (counts_.size() != n * n) throw DimensionError("CooccurrenceMatrix: wrong element count");
  }

  std::size_t size() const noexcept { return n_; }
  std::uint64_t operator()(std::size_t i, std::size_t j) const { return counts_[i * n_ + j]; }
  std::uint64_t& operator()(std::size_t i, std::size_t j) { return counts_[i * n_ + j]; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  friend bool operator==(const CooccurrenceMatrix&, const CooccurrenceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> counts_;
};

inline CooccurrenceMatrix count_cooccurrence(const std::vector<LabelRow>& label_rows, std::size_t n) {
  CooccurrenceMatrix m(n);
  std::vector<std::size_t> on;
  for (const auto& y : label_rows) {
    if (y.size() != n) {
      throw DimensionError("count_cooccurrence: label vector of width " + std::to_string(y.size()) +
                           ", expected " + std::to_string(n));
    }
    on.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (y[i]) on.push_back(i);
    for (std::size_t a : on)
      for (std::size_t b : on) ++m(a, b);
  }
  return m;
}

inline CooccurrenceMatrix count_cooccurrence(const std::vector<Example>& examples, std::size_t n) {
  std::vector<LabelRow> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(e.labels);
  return count_cooccurrence(rows, n);
}

// ---------------------------------------------------------------------------
// Loading

struct RawRecord {
  std::string text;
  std::vector<std::string> labels;
  std::size_t line = 0;
};

/// Parses a JSONL corpus. Errors carry "path:line".
inline std::vector<RawRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<RawRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw FormatError(where + ": record needs a string \"text\" field");
    }
    if (!j.contains("labels") || !j["labels"].is_array()) {
      throw FormatError(where + ": record needs a \"labels\" array");
    }
    RawRecord r;
    r.text = j["text"].get<std::string>();
    r.line = lineno;
    for (const auto& l : j["labels"]) {
      if (!l.is_string()) throw FormatError(where + ": labels must be strings");
      r.labels.push_back(l.get<std::string>());
    }
    records.push_back(std::move(r));
  }
  return records;
}

struct CorpusOptions {
  std::size_t min_freq = 2;
  std::size_t max_len = 64;
  /// Applied to record labels before label-space lookup (e.g. happiness -> joy).
  std::map<std::string, std::string> aliases;
};

struct Corpus {
  std::vector<Example> examples;
  LabelSpace labels;
  Vocabulary vocab;
};

namespace detail {

inline std::string resolve_alias(const std::string& name, const CorpusOptions& opts) {
  auto it = opts.aliases.find(name);
  return it == opts.aliases.end() ? name : it->second;
}

inline std::vector<std::string> record_tokens(const RawRecord& r, const std::string& source) {
  auto toks = tokenize(preprocess(r.text));
  if (toks.empty()) {
    throw FormatError(source + ":" + std::to_string(r.line) + ": empty after preprocessing");
  }
  return toks;
}

}  // namespace detail

/// Turns parsed records into examples against a fixed label space and
/// vocabulary. Token lists are truncated from the right to max_len.
inline std::vector<Example> encode_records(const std::vector<RawRecord>& records,
                                           const LabelSpace& labels, const Vocabulary& vocab,
                                           const CorpusOptions& opts, const std::string& source) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Example ex;
    ex.raw_text = r.text;
    auto toks = detail::record_tokens(r, source);
    if (toks.size() > opts.max_len) toks.resize(opts.max_len);
    ex.tokens = vocab.encode(toks);
    ex.labels.assign(labels.size(), 0);
    for (const auto& name : r.labels) {
      const auto canonical = detail::resolve_alias(name, opts);
      auto idx = labels.find(canonical);
      if (!idx) {
        throw FormatError(source + ":" + std::to_string(r.line) + ": unknown label '" + name + "'");
      }
      ex.labels[*idx] = 1;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

/// Loads a training corpus: builds the vocabulary from this file and the
/// label space from first appearance unless `label_space` is given.
inline Corpus load_corpus(const std::filesystem::path& path,
                          const std::optional<LabelSpace>& label_space = std::nullopt,
                          const CorpusOptions& opts = {}) {
  const auto records = read_jsonl(path);
  if (records.empty()) throw FormatError(path.string() + ": no examples");
  LabelSpace labels;
  if (label_space) {
    labels = *label_space;
  } else {
    std::vector<std::string> order;
    for (const auto& r : records)
      for (const auto& l : r.labels) {
        auto c = detail::resolve_alias(l, opts);
        if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
      }
    labels = LabelSpace(std::move(order));
  }
  std::vector<std::vector<std::string>> token_lists;
  token_lists.reserve(records.size());
  for (const auto& r : records) token_lists.push_back(detail::record_tokens(r, path.string()));
  Corpus c{{}, labels, Vocabulary::build(token_lists, opts.min_freq)};
  c.examples = encode_records(records, c.labels, c.vocab, opts, path.string());
  return c;
}

/// Loads a validation/test split against an existing label space and vocabulary.
inline std::vector<Example> load_split(const std::filesystem::path& path, const LabelSpace& labels,
                                       const Vocabulary& vocab, const CorpusOptions& opts = {}) {
  const auto records = read_jsonl(path);
  if (records.empty()) throw FormatError(path.string() + ": no examples");
  return encode_records(records, labels, vocab, opts, path.string());
}

/// Encodes one free-text input with the training-time pipeline; returns an
/// empty list when nothing survives preprocessing.
inline std::vector<TokenId> encode_text(std::string_view text, const Vocabulary& vocab,
                                        std::size_t max_len) {
  auto toks = tokenize(preprocess(text));
  if (toks.size() > max_len) toks.resize(max_len);
  return vocab.encode(toks);
}

}  // namespace emograph
