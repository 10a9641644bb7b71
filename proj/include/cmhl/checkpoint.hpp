#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmhl/metrics.hpp"
#include "cmhl/params.hpp"

// Checkpoint container: <dir>/manifest.json plus one raw little-endian
// float64 file per tensor.

namespace cmhl {

inline constexpr const char* kCheckpointFormat = "cmhl-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json config;
  std::vector<std::string> vocabulary;  // non-special tokens in id order
  std::size_t min_freq = 1;
  nlohmann::json schema;
  std::size_t epoch = 0;
  Metrics metrics;

  static std::vector<NamedTensor> capture(const ParamList& params) {
    std::vector<NamedTensor> out;
    for (const auto& p : params) out.push_back({p.name, p.value.shape(), {p.value.data().begin(), p.value.data().end()}});
    return out;
  }
};

inline nlohmann::json to_json(const Metrics& m) {
  return {{"macro_f1", m.macro_f1},
          {"per_class_recall", m.per_class_recall},
          {"macro_recall", m.macro_recall},
          {"mean_confidence", m.mean_confidence},
          {"combined_score", m.combined_score},
          {"accuracy", m.accuracy}};
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.macro_f1 = j.at("macro_f1").get<double>();
  m.per_class_recall = j.at("per_class_recall").get<std::vector<double>>();
  m.macro_recall = j.at("macro_recall").get<double>();
  m.mean_confidence = j.at("mean_confidence").get<double>();
  m.combined_score = j.at("combined_score").get<double>();
  m.accuracy = j.value("accuracy", 0.0);
  return m;
}

namespace detail {

inline void write_f64_le(std::ostream& out, const std::vector<double>& values) {
  std::vector<char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<double> read_f64_le(std::istream& in, std::size_t count) {
  std::vector<unsigned char> bytes(count * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw DataError("tensor file truncated");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("tensor file longer than its shape");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest{{"format", kCheckpointFormat},
                          {"version", kCheckpointVersion},
                          {"config", ckpt.config},
                          {"vocabulary", ckpt.vocabulary},
                          {"min_freq", ckpt.min_freq},
                          {"schema", ckpt.schema},
                          {"epoch", ckpt.epoch},
                          {"metrics", to_json(ckpt.metrics)},
                          {"tensors", nlohmann::json::array()}};
  for (std::size_t k = 0; k < ckpt.tensors.size(); ++k) {
    const auto& t = ckpt.tensors[k];
    std::ostringstream file;
    file << "tensor_" << std::setw(3) << std::setfill('0') << k << ".bin";
    std::ofstream out(dir / file.str(), std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / file.str()).string());
    detail::write_f64_le(out, t.values);
    manifest["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "float64"}, {"file", file.str()}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no checkpoint manifest in " + dir.string());
  Checkpoint ckpt;
  try {
    nlohmann::json manifest;
    in >> manifest;
    if (manifest.value("format", "") != kCheckpointFormat || manifest.value("version", 0) != kCheckpointVersion) {
      throw DataError("unsupported checkpoint format in " + dir.string());
    }
    ckpt.config = manifest.at("config");
    ckpt.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
    ckpt.min_freq = manifest.at("min_freq").get<std::size_t>();
    ckpt.schema = manifest.at("schema");
    ckpt.epoch = manifest.at("epoch").get<std::size_t>();
    ckpt.metrics = metrics_from_json(manifest.at("metrics"));
    for (const auto& entry : manifest.at("tensors")) {
      if (entry.at("dtype").get<std::string>() != "float64") throw DataError("unsupported tensor dtype");
      NamedTensor t{entry.at("name").get<std::string>(), entry.at("shape").get<Shape>(), {}};
      std::ifstream bin(dir / entry.at("file").get<std::string>(), std::ios::binary);
      if (!bin) throw DataError("missing tensor file for " + t.name);
      t.values = detail::read_f64_le(bin, shape_size(t.shape));
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  return ckpt;
}

/// Copies checkpoint tensors into `params`, matched by name and shape.
inline void apply_checkpoint(ParamList& params, const Checkpoint& ckpt) {
  if (params.size() != ckpt.tensors.size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(), [&](const auto& t) { return t.name == p.name; });
    if (it == ckpt.tensors.end()) throw CompatibilityError("checkpoint lacks tensor '" + p.name + "'");
    if (it->shape != p.value.shape()) {
      throw CompatibilityError("tensor '" + p.name + "' has shape " + shape_str(it->shape) + ", model expects " +
                               shape_str(p.value.shape()));
    }
    std::copy(it->values.begin(), it->values.end(), p.value.mutable_data().begin());
  }
}

}  // namespace cmhl
