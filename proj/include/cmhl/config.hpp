#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "cmhl/affect_schema.hpp"
#include "cmhl/data.hpp"
#include "cmhl/encoder.hpp"
#include "cmhl/trainer.hpp"

namespace cmhl {

enum class Task { emotion, mental_health };

inline const char* to_string(Task t) { return t == Task::emotion ? "emotion" : "mental_health"; }

inline Task parse_task(const std::string& s) {
  if (s == "emotion") return Task::emotion;
  if (s == "mental_health") return Task::mental_health;
  throw ConfigError("unknown task '" + s + "' (expected emotion or mental_health)");
}

struct RunPaths {
  std::string train;
  std::string validation;
  std::string schema;
  std::string lexicon;
  std::string output_dir = "runs/latest";
};

/// Everything a training run needs. Presets are applied first, then the
/// config file, then CMHL_SEED, then command-line flags.
struct RunConfig {
  Task task = Task::emotion;
  RunPaths paths;
  TrainConfig train;
  EncoderConfig encoder;
  LossWeights loss;
  CorpusFields fields;

  static RunConfig preset(Task task) {
    RunConfig c;
    c.task = task;
    c.train = task == Task::emotion ? TrainConfig::emotion_preset() : TrainConfig::mental_health_preset();
    return c;
  }

  /// Encoder settings with the run's dropout and sequence cap applied.
  EncoderConfig resolved_encoder() const {
    EncoderConfig e = encoder;
    e.dropout = train.dropout;
    return e;
  }

  void validate() const {
    train.validate();
    loss.validate();
    resolved_encoder().validate(train.max_seq_len);
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"task", "seed", "paths", "train", "encoder", "loss", "data"}, "config");
  try {
    RunConfig c = RunConfig::preset(parse_task(j.value("task", std::string("emotion"))));
    if (j.contains("seed")) c.train.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      detail::reject_unknown(p, {"train", "validation", "schema", "lexicon", "output_dir"}, "paths");
      detail::read(p, "train", c.paths.train);
      detail::read(p, "validation", c.paths.validation);
      detail::read(p, "schema", c.paths.schema);
      detail::read(p, "lexicon", c.paths.lexicon);
      detail::read(p, "output_dir", c.paths.output_dir);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t,
                             {"learning_rate", "weight_decay", "warmup_steps", "warmup_fraction", "batch_size",
                              "grad_accumulation_steps", "epochs", "max_seq_len", "dropout", "early_stop_patience",
                              "min_freq", "augment", "p_syn", "p_del", "eval_batch_size"},
                             "train");
      auto& tc = c.train;
      detail::read(t, "learning_rate", tc.learning_rate);
      detail::read(t, "weight_decay", tc.weight_decay);
      if (t.contains("warmup_steps")) {
        tc.warmup_steps = t.at("warmup_steps").is_null() ? std::nullopt
                                                         : std::optional(t.at("warmup_steps").get<std::size_t>());
      }
      if (t.contains("warmup_fraction")) {
        tc.warmup_fraction = t.at("warmup_fraction").get<double>();
        if (!t.contains("warmup_steps")) tc.warmup_steps.reset();
      }
      detail::read(t, "batch_size", tc.batch_size);
      detail::read(t, "grad_accumulation_steps", tc.grad_accumulation_steps);
      detail::read(t, "epochs", tc.epochs);
      detail::read(t, "max_seq_len", tc.max_seq_len);
      detail::read(t, "dropout", tc.dropout);
      if (t.contains("early_stop_patience")) {
        tc.early_stop_patience = t.at("early_stop_patience").is_null()
                                     ? std::nullopt
                                     : std::optional(t.at("early_stop_patience").get<std::size_t>());
      }
      detail::read(t, "min_freq", tc.min_freq);
      detail::read(t, "augment", tc.augment);
      detail::read(t, "p_syn", tc.p_syn);
      detail::read(t, "p_del", tc.p_del);
      detail::read(t, "eval_batch_size", tc.eval_batch_size);
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      detail::reject_unknown(e, {"layers", "heads", "hidden", "ffn_dim", "max_positions"}, "encoder");
      detail::read(e, "layers", c.encoder.layers);
      detail::read(e, "heads", c.encoder.heads);
      detail::read(e, "hidden", c.encoder.hidden);
      detail::read(e, "ffn_dim", c.encoder.ffn_dim);
      detail::read(e, "max_positions", c.encoder.max_positions);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      detail::reject_unknown(l, {"alpha1", "alpha2", "lambda_excl"}, "loss");
      detail::read(l, "alpha1", c.loss.alpha1);
      detail::read(l, "alpha2", c.loss.alpha2);
      detail::read(l, "lambda_excl", c.loss.lambda_excl);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      detail::reject_unknown(d, {"text_field", "label_field", "split_field"}, "data");
      detail::read(d, "text_field", c.fields.text);
      detail::read(d, "label_field", c.fields.label);
      detail::read(d, "split_field", c.fields.split);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

/// CMHL_SEED, when set, replaces the configured seed.
inline void apply_seed_env(RunConfig& c) {
  if (const char* s = std::getenv("CMHL_SEED"); s && *s) {
    try {
      c.train.seed = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("CMHL_SEED is not an unsigned integer: ") + s);
    }
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& t = c.train;
  nlohmann::json train{{"learning_rate", t.learning_rate},
                       {"weight_decay", t.weight_decay},
                       {"warmup_steps", t.warmup_steps ? nlohmann::json(*t.warmup_steps) : nlohmann::json(nullptr)},
                       {"warmup_fraction", t.warmup_fraction},
                       {"batch_size", t.batch_size},
                       {"grad_accumulation_steps", t.grad_accumulation_steps},
                       {"epochs", t.epochs},
                       {"max_seq_len", t.max_seq_len},
                       {"dropout", t.dropout},
                       {"early_stop_patience",
                        t.early_stop_patience ? nlohmann::json(*t.early_stop_patience) : nlohmann::json(nullptr)},
                       {"min_freq", t.min_freq},
                       {"augment", t.augment},
                       {"p_syn", t.p_syn},
                       {"p_del", t.p_del},
                       {"eval_batch_size", t.eval_batch_size}};
  return {{"task", to_string(c.task)},
          {"seed", t.seed},
          {"paths",
           {{"train", c.paths.train},
            {"validation", c.paths.validation},
            {"schema", c.paths.schema},
            {"lexicon", c.paths.lexicon},
            {"output_dir", c.paths.output_dir}}},
          {"train", train},
          {"encoder",
           {{"layers", c.encoder.layers},
            {"heads", c.encoder.heads},
            {"hidden", c.encoder.hidden},
            {"ffn_dim", c.encoder.ffn_dim},
            {"max_positions", c.encoder.max_positions}}},
          {"loss", {{"alpha1", c.loss.alpha1}, {"alpha2", c.loss.alpha2}, {"lambda_excl", c.loss.lambda_excl}}},
          {"data", {{"text_field", c.fields.text}, {"label_field", c.fields.label}, {"split_field", c.fields.split}}}};
}

}  // namespace cmhl
