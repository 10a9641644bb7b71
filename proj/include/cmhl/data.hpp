#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmhl/affect_schema.hpp"
#include "cmhl/default_lexicon.hpp"
#include "cmhl/errors.hpp"
#include "cmhl/mh_schema.hpp"
#include "cmhl/random.hpp"

namespace cmhl {

inline constexpr std::size_t kMaxSequenceLength = 256;

/// Lowercased whitespace tokenization; every ASCII punctuation character
/// becomes a token of its own.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return tokens;
}

/// One training or evaluation item. `label` is the primary class (emotion or
/// diagnostic category). For the emotion task valence and intensity are
/// derived at load time; for the mental-health task only intensity may be
/// present, taken from the corpus.
struct LabeledExample {
  std::string text;
  std::size_t label = 0;
  std::optional<std::size_t> valence;
  std::optional<std::size_t> intensity;
  /// "train" / "validation" when the source file carries a published split.
  std::optional<std::string> split;

  bool operator==(const LabeledExample&) const = default;
};

struct Rejection {
  std::size_t line = 0;  // 1-based
  std::string reason;
  /// The line parsed but its label is not in the schema.
  bool bad_label = false;
};

struct Corpus {
  std::vector<LabeledExample> examples;
  std::vector<Rejection> rejections;
};

/// Field names of the JSONL records; lets SWMH or other exports be read
/// without rewriting them first.
struct CorpusFields {
  std::string text = "text";
  std::string label = "label";
  std::string split = "split";
};

/// Fills valence and intensity from the emotion label. Pure in `label`, so
/// calling it twice changes nothing.
inline void derive_auxiliary_labels(LabeledExample& ex, const AffectSchema& schema) {
  ex.valence = static_cast<std::size_t>(schema.derive_valence(ex.label));
  ex.intensity = static_cast<std::size_t>(schema.derive_intensity(ex.label));
}

namespace detail {

template <class ResolveLabel>
Corpus parse_corpus(std::istream& in, const CorpusFields& fields, ResolveLabel resolve) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw DataError("line is not a JSON object");
      if (!j.contains(fields.text) || !j.at(fields.text).is_string()) {
        throw DataError("missing string field '" + fields.text + "'");
      }
      LabeledExample ex;
      ex.text = j.at(fields.text).get<std::string>();
      if (ex.text.find_first_not_of(" \t\r\n") == std::string::npos) throw DataError("empty text");
      if (!j.contains(fields.label)) throw DataError("missing field '" + fields.label + "'");
      resolve(j, ex);
      if (j.contains(fields.split) && j.at(fields.split).is_string()) {
        ex.split = j.at(fields.split).get<std::string>();
      }
      corpus.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      corpus.rejections.push_back({line_no, std::string("malformed JSON: ") + e.what()});
    } catch (const LabelError& e) {
      corpus.rejections.push_back({line_no, e.what(), true});
    } catch (const Error& e) {
      corpus.rejections.push_back({line_no, e.what()});
    }
  }
  return corpus;
}

inline std::ifstream open_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path);
  return in;
}

}  // namespace detail

/// Emotion labels may be names ("joy") or class indices (dair-ai exports).
inline std::size_t resolve_emotion_label(const nlohmann::json& v, const AffectSchema& schema) {
  if (v.is_number_integer()) {
    const auto i = v.get<long>();
    if (i < 0 || i >= static_cast<long>(schema.size())) {
      throw LabelError("label index " + std::to_string(i) + " outside taxonomy");
    }
    return static_cast<std::size_t>(i);
  }
  if (!v.is_string()) throw LabelError("label must be a string or integer");
  try {
    return schema.index_of(v.get<std::string>());
  } catch (const SchemaError&) {
    throw LabelError("unknown label '" + v.get<std::string>() + "'");
  }
}

inline Corpus load_corpus(std::istream& in, const AffectSchema& schema, const CorpusFields& fields = {}) {
  return detail::parse_corpus(in, fields, [&](const nlohmann::json& j, LabeledExample& ex) {
    ex.label = resolve_emotion_label(j.at(fields.label), schema);
    derive_auxiliary_labels(ex, schema);
  });
}

inline Corpus load_corpus(const std::string& path, const AffectSchema& schema, const CorpusFields& fields = {}) {
  auto in = detail::open_corpus(path);
  return load_corpus(in, schema, fields);
}

/// Mental-health corpus: category label plus an optional severity field
/// named by the schema. Missing severity leaves `intensity` empty.
inline Corpus load_corpus(std::istream& in, const MentalHealthSchema& schema, const CorpusFields& fields = {}) {
  return detail::parse_corpus(in, fields, [&](const nlohmann::json& j, LabeledExample& ex) {
    const auto& v = j.at(fields.label);
    if (v.is_number_integer()) {
      const auto i = v.get<long>();
      if (i < 0 || i >= static_cast<long>(schema.size())) throw LabelError("label index out of range");
      ex.label = static_cast<std::size_t>(i);
    } else if (v.is_string()) {
      ex.label = schema.index_of(v.get<std::string>());
    } else {
      throw LabelError("label must be a string or integer");
    }
    if (j.contains(schema.intensity_field) && !j.at(schema.intensity_field).is_null()) {
      ex.intensity = MentalHealthSchema::severity_index(j.at(schema.intensity_field));
    }
  });
}

inline Corpus load_corpus(const std::string& path, const MentalHealthSchema& schema,
                          const CorpusFields& fields = {}) {
  auto in = detail::open_corpus(path);
  return load_corpus(in, schema, fields);
}

class Vocabulary {
 public:
  static constexpr std::size_t kCls = 0;
  static constexpr std::size_t kPad = 1;
  static constexpr std::size_t kUnk = 2;
  static constexpr std::size_t kSpecials = 3;

  Vocabulary() : Vocabulary(std::vector<std::string>{}, 1) {}

  /// `tokens` excludes the specials, which always occupy ids 0-2.
  Vocabulary(const std::vector<std::string>& tokens, std::size_t min_frequency)
      : min_frequency_(min_frequency) {
    tokens_ = {"[CLS]", "[PAD]", "[UNK]"};
    tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!ids_.emplace(tokens_[i], i).second) throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_frequency() const { return min_frequency_; }

  std::size_t id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[id];
  }

  /// Non-special tokens in id order.
  std::vector<std::string> entries() const { return {tokens_.begin() + kSpecials, tokens_.end()}; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::size_t min_frequency_;
};

/// Tokens with frequency >= min_freq, ordered by descending frequency then
/// lexicographically.
inline Vocabulary build_vocab(const std::vector<LabeledExample>& examples, std::size_t min_freq) {
  if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
  if (examples.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : examples)
    for (auto& tok : tokenize(ex.text)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, _] : kept) tokens.push_back(tok);
  return Vocabulary(tokens, min_freq);
}

struct Batch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> token_ids;  // [batch, seq_len]
  std::vector<std::uint8_t> mask;      // [batch, seq_len], 1 = real token
  std::vector<std::size_t> labels;
  std::vector<long> valence;           // -1 when absent
  std::vector<long> intensity;         // -1 when absent

  std::size_t id(std::size_t row, std::size_t pos) const { return token_ids[row * seq_len + pos]; }
};

enum class Padding {
  max_length,  // every row padded to max_len
  longest,     // rows padded to the longest row in the batch
};

/// [CLS] + tokens, truncated to max_len and right-padded with [PAD].
inline Batch encode_batch(const std::vector<LabeledExample>& examples, const Vocabulary& vocab,
                          std::size_t max_len, Padding padding = Padding::max_length) {
  if (max_len < 2) throw ConfigError("max_len must be >= 2");
  std::vector<std::vector<std::size_t>> rows;
  rows.reserve(examples.size());
  std::size_t longest = 1;
  for (const auto& ex : examples) {
    std::vector<std::size_t> ids{Vocabulary::kCls};
    for (const auto& tok : tokenize(ex.text)) {
      if (ids.size() == max_len) break;
      ids.push_back(vocab.id(tok));
    }
    longest = std::max(longest, ids.size());
    rows.push_back(std::move(ids));
  }
  Batch b;
  b.batch = examples.size();
  b.seq_len = padding == Padding::max_length ? max_len : longest;
  b.token_ids.assign(b.batch * b.seq_len, Vocabulary::kPad);
  b.mask.assign(b.batch * b.seq_len, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), b.token_ids.begin() + static_cast<std::ptrdiff_t>(r * b.seq_len));
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(r * b.seq_len), rows[r].size(), 1);
    b.labels.push_back(examples[r].label);
    b.valence.push_back(examples[r].valence ? static_cast<long>(*examples[r].valence) : -1);
    b.intensity.push_back(examples[r].intensity ? static_cast<long>(*examples[r].intensity) : -1);
  }
  return b;
}

/// Rows of comma-separated synonyms; a word's synonyms are the union of the
/// other members of every row it appears in.
class SynonymLexicon {
 public:
  SynonymLexicon() = default;

  static SynonymLexicon parse(std::istream& in) {
    SynonymLexicon lex;
    std::string line;
    while (std::getline(in, line)) {
      std::vector<std::string> row;
      std::stringstream ss(line);
      std::string word;
      while (std::getline(ss, word, ',')) {
        auto first = word.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        word = word.substr(first, word.find_last_not_of(" \t\r") - first + 1);
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        row.push_back(word);
      }
      for (const auto& w : row)
        for (const auto& s : row)
          if (s != w) lex.add(w, s);
    }
    return lex;
  }

  static SynonymLexicon from_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static SynonymLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon " + path);
    return parse(in);
  }

  static SynonymLexicon bundled() { return from_string(kDefaultLexicon); }

  const std::vector<std::string>* synonyms(const std::string& word) const {
    auto it = table_.find(word);
    return it == table_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return table_.size(); }

 private:
  void add(const std::string& word, const std::string& synonym) {
    auto& list = table_[word];
    if (std::find(list.begin(), list.end(), synonym) == list.end()) list.push_back(synonym);
  }

  std::unordered_map<std::string, std::vector<std::string>> table_;
};

/// Synonym substitution then random deletion, each token independently.
/// When deletion would empty a non-empty text, one uniformly chosen token of
/// the substituted sequence survives. Labels are never touched.
inline LabeledExample augment(const LabeledExample& example, Rng& rng, double p_syn, double p_del,
                              const SynonymLexicon& lexicon) {
  if (!(p_syn >= 0.0 && p_syn <= 1.0 && p_del >= 0.0 && p_del <= 1.0)) {
    throw ConfigError("augmentation probabilities must lie in [0, 1]");
  }
  auto tokens = tokenize(example.text);
  for (auto& tok : tokens) {
    if (uniform01(rng) >= p_syn) continue;
    if (const auto* syn = lexicon.synonyms(tok); syn && !syn->empty()) tok = (*syn)[uniform_index(rng, syn->size())];
  }
  std::vector<std::string> kept;
  for (const auto& tok : tokens)
    if (uniform01(rng) >= p_del) kept.push_back(tok);
  if (kept.empty() && !tokens.empty()) kept.push_back(tokens[uniform_index(rng, tokens.size())]);

  LabeledExample out = example;
  out.text.clear();
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i) out.text += ' ';
    out.text += kept[i];
  }
  if (kept.empty()) out.text = example.text;
  return out;
}

/// Separates a corpus by its published split, else by a seeded 90/10 draw.
inline std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> split_corpus(
    const std::vector<LabeledExample>& all, std::uint64_t seed, double validation_fraction = 0.1) {
  std::vector<LabeledExample> train, validation;
  const bool published = std::any_of(all.begin(), all.end(), [](const auto& e) { return e.split.has_value(); });
  if (published) {
    for (const auto& e : all) {
      const bool val = e.split && (*e.split == "validation" || *e.split == "val" || *e.split == "dev");
      (val ? validation : train).push_back(e);
    }
    return {train, validation};
  }
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5eed));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  const auto n_val = static_cast<std::size_t>(static_cast<double>(all.size()) * validation_fraction + 0.5);
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_val ? validation : train).push_back(all[order[k]]);
  return {train, validation};
}

}  // namespace cmhl
