#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmhl/errors.hpp"

namespace cmhl {

inline constexpr std::size_t kSeverityLevels = 3;

/// Label schema for the mental-health task: diagnostic categories plus the
/// name of the optional per-line severity field.
struct MentalHealthSchema {
  std::vector<std::string> categories{"depression", "SuicideWatch", "Anxiety", "offmychest", "bipolar"};
  std::string intensity_field = "intensity";

  std::size_t size() const { return categories.size(); }

  /// Accepts the bare name or the "self."-prefixed subreddit form used by
  /// SWMH exports.
  std::size_t index_of(std::string name) const {
    if (name.rfind("self.", 0) == 0) name.erase(0, 5);
    auto it = std::find(categories.begin(), categories.end(), name);
    if (it == categories.end()) throw LabelError("unknown category '" + name + "'");
    return static_cast<std::size_t>(it - categories.begin());
  }

  /// 0, 1, 2 or low, medium, high.
  static std::size_t severity_index(const nlohmann::json& v) {
    static const std::vector<std::string> names{"low", "medium", "high"};
    if (v.is_number_integer()) {
      const auto i = v.get<long>();
      if (i >= 0 && i < static_cast<long>(kSeverityLevels)) return static_cast<std::size_t>(i);
    } else if (v.is_string()) {
      auto it = std::find(names.begin(), names.end(), v.get<std::string>());
      if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
    }
    throw LabelError("invalid severity value " + v.dump());
  }
};

inline MentalHealthSchema mh_schema_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("label schema must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "categories" && key != "intensity_field") {
      throw SchemaError("unknown label schema field '" + key + "'");
    }
  }
  MentalHealthSchema s;
  try {
    if (j.contains("categories")) s.categories = j.at("categories").get<std::vector<std::string>>();
    if (j.contains("intensity_field")) s.intensity_field = j.at("intensity_field").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed label schema: ") + e.what());
  }
  if (s.categories.empty()) throw SchemaError("label schema has no categories");
  if (std::set<std::string>(s.categories.begin(), s.categories.end()).size() != s.categories.size()) {
    throw SchemaError("duplicate category names");
  }
  return s;
}

inline nlohmann::json to_json(const MentalHealthSchema& s) {
  return {{"categories", s.categories}, {"intensity_field", s.intensity_field}};
}

inline MentalHealthSchema load_mh_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open label schema " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("label schema " + path + ": " + e.what());
  }
  return mh_schema_from_json(j);
}

}  // namespace cmhl
