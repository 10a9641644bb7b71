#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmhl/errors.hpp"

namespace cmhl {

/// Valence classes; the integer value is the valence-head class index.
enum class Valence : std::size_t { positive = 0, negative = 1, neutral = 2 };
/// Emotion-task intensity classes; the integer value is the head class index.
enum class Intensity : std::size_t { high = 0, low = 1 };

inline constexpr std::size_t kValenceClasses = 3;
inline constexpr std::size_t kIntensityClasses = 2;

inline const char* to_string(Valence v) {
  switch (v) {
    case Valence::positive: return "positive";
    case Valence::negative: return "negative";
    case Valence::neutral: return "neutral";
  }
  return "?";
}

inline const char* to_string(Intensity i) { return i == Intensity::high ? "high" : "low"; }

struct EmotionTaxonomy {
  std::vector<std::string> emotions;
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
  std::vector<std::size_t> high_intensity;
};

/// (valence, arousal) per emotion, both in [-1, 1].
struct CircumplexPoint {
  double valence = 0.0;
  double arousal = 0.0;
};
using CircumplexTable = std::vector<CircumplexPoint>;

struct LossWeights {
  double alpha1 = 0.3;
  double alpha2 = 0.2;
  double lambda_excl = 0.4;

  void validate() const {
    if (alpha1 < 0 || alpha2 < 0 || lambda_excl < 0) throw ConfigError("loss weights must be non-negative");
  }
};

/// Per (positive, negative) pair threshold for the exclusivity hinge.
struct ThresholdMatrix {
  double tau0 = 0.8;
  double scale = -0.3;
  std::map<std::pair<std::size_t, std::size_t>, double> tau;

  double at(std::size_t i, std::size_t j) const {
    auto it = tau.find({i, j});
    if (it == tau.end()) {
      throw SchemaError("threshold matrix has no entry for pair (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")");
    }
    return it->second;
  }
};

inline constexpr double kThresholdFloor = 0.05;
inline constexpr double kThresholdCeiling = 0.99;
/// Neutral emotions must sit this close to the valence origin.
inline constexpr double kNeutralValenceBand = 0.2;

class AffectSchema {
 public:
  AffectSchema(EmotionTaxonomy taxonomy, CircumplexTable table, double tau0, double scale)
      : taxonomy_(std::move(taxonomy)), table_(std::move(table)), tau0_(tau0), scale_(scale) {
    validate();
    for (std::size_t i = 0; i < table_.size(); ++i)
      for (std::size_t j = i + 1; j < table_.size(); ++j)
        max_distance_ = std::max(max_distance_, raw_distance(i, j));
  }

  const EmotionTaxonomy& taxonomy() const { return taxonomy_; }
  const CircumplexTable& table() const { return table_; }
  std::size_t size() const { return taxonomy_.emotions.size(); }
  const std::string& name(std::size_t i) const { return taxonomy_.emotions.at(check(i)); }
  double tau0() const { return tau0_; }
  double scale() const { return scale_; }

  std::size_t index_of(const std::string& name) const {
    auto it = std::find(taxonomy_.emotions.begin(), taxonomy_.emotions.end(), name);
    if (it == taxonomy_.emotions.end()) throw SchemaError("unknown emotion '" + name + "'");
    return static_cast<std::size_t>(it - taxonomy_.emotions.begin());
  }

  bool is_positive(std::size_t i) const { return contains(taxonomy_.positive, check(i)); }
  bool is_negative(std::size_t i) const { return contains(taxonomy_.negative, check(i)); }

  Valence derive_valence(std::size_t emotion) const {
    if (is_positive(emotion)) return Valence::positive;
    if (is_negative(emotion)) return Valence::negative;
    return Valence::neutral;
  }

  Intensity derive_intensity(std::size_t emotion) const {
    return contains(taxonomy_.high_intensity, check(emotion)) ? Intensity::high : Intensity::low;
  }

  /// Euclidean circumplex distance scaled by the largest pairwise distance.
  double affective_distance(std::size_t i, std::size_t j) const {
    check(i);
    check(j);
    if (max_distance_ == 0.0) return 0.0;
    return raw_distance(i, j) / max_distance_;
  }

  /// All (positive, negative) index pairs in taxonomy order.
  std::vector<std::pair<std::size_t, std::size_t>> opposing_pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i : taxonomy_.positive)
      for (std::size_t j : taxonomy_.negative) pairs.emplace_back(i, j);
    return pairs;
  }

  ThresholdMatrix thresholds() const;

 private:
  static bool contains(const std::vector<std::size_t>& v, std::size_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  }

  std::size_t check(std::size_t i) const {
    if (i >= taxonomy_.emotions.size()) {
      throw SchemaError("emotion index " + std::to_string(i) + " outside taxonomy of " +
                        std::to_string(taxonomy_.emotions.size()));
    }
    return i;
  }

  double raw_distance(std::size_t i, std::size_t j) const {
    return std::hypot(table_[i].valence - table_[j].valence, table_[i].arousal - table_[j].arousal);
  }

  void validate() const {
    const std::size_t n = taxonomy_.emotions.size();
    if (n == 0) throw SchemaError("taxonomy has no emotions");
    std::set<std::string> names(taxonomy_.emotions.begin(), taxonomy_.emotions.end());
    if (names.size() != n) throw SchemaError("duplicate emotion names");
    if (table_.size() != n) throw SchemaError("circumplex table must have one point per emotion");
    for (const auto* set : {&taxonomy_.positive, &taxonomy_.negative, &taxonomy_.high_intensity}) {
      for (std::size_t i : *set) {
        if (i >= n) throw SchemaError("set member outside taxonomy");
      }
    }
    for (std::size_t i : taxonomy_.positive) {
      if (contains(taxonomy_.negative, i)) {
        throw SchemaError("'" + taxonomy_.emotions[i] + "' is both positive and negative");
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = table_[i];
      if (!std::isfinite(p.valence) || !std::isfinite(p.arousal) || std::abs(p.valence) > 1.0 ||
          std::abs(p.arousal) > 1.0) {
        throw SchemaError("coordinates of '" + taxonomy_.emotions[i] + "' must lie in [-1, 1]");
      }
      const bool ok = contains(taxonomy_.positive, i)   ? p.valence > 0.0
                      : contains(taxonomy_.negative, i) ? p.valence < 0.0
                                                        : std::abs(p.valence) <= kNeutralValenceBand;
      if (!ok) {
        throw SchemaError("valence coordinate of '" + taxonomy_.emotions[i] +
                          "' contradicts its valence class");
      }
    }
  }

  EmotionTaxonomy taxonomy_;
  CircumplexTable table_;
  double tau0_;
  double scale_;
  double max_distance_ = 0.0;
};

/// τ_ij = clamp(tau0 + scale·d(i, j), 0.05, 0.99) for every opposing pair.
inline ThresholdMatrix build_threshold_matrix(double tau0, double scale, const AffectSchema& schema) {
  if (!(tau0 > 0.0 && tau0 < 1.0)) throw ConfigError("tau0 must lie in (0, 1)");
  if (!std::isfinite(scale)) throw ConfigError("threshold scale must be finite");
  ThresholdMatrix m{tau0, scale, {}};
  for (auto [i, j] : schema.opposing_pairs()) {
    m.tau[{i, j}] = std::clamp(tau0 + scale * schema.affective_distance(i, j), kThresholdFloor,
                               kThresholdCeiling);
  }
  return m;
}

inline ThresholdMatrix AffectSchema::thresholds() const {
  return build_threshold_matrix(tau0_, scale_, *this);
}

/// sadness, joy, love, anger, fear, surprise (the dair-ai label order).
inline AffectSchema default_affect_schema() {
  EmotionTaxonomy tax{{"sadness", "joy", "love", "anger", "fear", "surprise"},
                      {1, 2},
                      {0, 3, 4},
                      {3, 4, 5, 1}};
  CircumplexTable table{{-0.7, -0.4}, {0.8, 0.5}, {0.7, -0.1}, {-0.6, 0.7}, {-0.6, 0.6}, {0.0, 0.8}};
  return AffectSchema(std::move(tax), std::move(table), 0.8, -0.3);
}

// JSON form:
//   {"emotions": [...], "positive": [names], "negative": [names],
//    "coords": {"name": [valence, arousal], ...}, "tau0": 0.8, "scale": -0.3,
//    "high_intensity": [names]}
// "high_intensity" is optional; without it an emotion is high-intensity when
// its arousal coordinate is positive.
inline AffectSchema affect_schema_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"emotions", "positive", "negative", "coords",
                                           "tau0",     "scale",    "high_intensity"};
  if (!j.is_object()) throw SchemaError("schema must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw SchemaError("unknown schema field '" + key + "'");
  }
  try {
    EmotionTaxonomy tax;
    tax.emotions = j.at("emotions").get<std::vector<std::string>>();
    auto index = [&](const std::string& name) {
      auto it = std::find(tax.emotions.begin(), tax.emotions.end(), name);
      if (it == tax.emotions.end()) throw SchemaError("unknown emotion '" + name + "' in schema sets");
      return static_cast<std::size_t>(it - tax.emotions.begin());
    };
    for (const auto& n : j.at("positive").get<std::vector<std::string>>()) tax.positive.push_back(index(n));
    for (const auto& n : j.at("negative").get<std::vector<std::string>>()) tax.negative.push_back(index(n));
    CircumplexTable table(tax.emotions.size());
    const auto& coords = j.at("coords");
    for (std::size_t i = 0; i < tax.emotions.size(); ++i) {
      if (!coords.contains(tax.emotions[i])) {
        throw SchemaError("coords missing emotion '" + tax.emotions[i] + "'");
      }
      auto xy = coords.at(tax.emotions[i]).get<std::array<double, 2>>();
      table[i] = {xy[0], xy[1]};
    }
    if (j.contains("high_intensity")) {
      for (const auto& n : j.at("high_intensity").get<std::vector<std::string>>())
        tax.high_intensity.push_back(index(n));
    } else {
      for (std::size_t i = 0; i < table.size(); ++i)
        if (table[i].arousal > 0.0) tax.high_intensity.push_back(i);
    }
    const double tau0 = j.value("tau0", 0.8);
    const double scale = j.value("scale", -0.3);
    if (!(tau0 > 0.0 && tau0 < 1.0)) throw ConfigError("tau0 must lie in (0, 1)");
    return AffectSchema(std::move(tax), std::move(table), tau0, scale);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
}

inline nlohmann::json to_json(const AffectSchema& s) {
  nlohmann::json j;
  const auto& tax = s.taxonomy();
  j["emotions"] = tax.emotions;
  auto names = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (std::size_t i : idx) out.push_back(tax.emotions[i]);
    return out;
  };
  j["positive"] = names(tax.positive);
  j["negative"] = names(tax.negative);
  j["high_intensity"] = names(tax.high_intensity);
  for (std::size_t i = 0; i < tax.emotions.size(); ++i)
    j["coords"][tax.emotions[i]] = {s.table()[i].valence, s.table()[i].arousal};
  j["tau0"] = s.tau0();
  j["scale"] = s.scale();
  return j;
}

inline AffectSchema load_affect_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema file " + path + ": " + e.what());
  }
  return affect_schema_from_json(j);
}

}  // namespace cmhl
