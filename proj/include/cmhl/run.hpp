#pragma once

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmhl/checkpoint.hpp"
#include "cmhl/config.hpp"
#include "cmhl/gradcheck_suites.hpp"

// Command implementations behind the cmhl executable. Each returns normally
// on success and throws a cmhl::Error subclass otherwise.

namespace cmhl {

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

/// 0 success, 2 configuration, 3 data, 4 numeric.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const DeterminismError*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 3;
  return 1;
}

// ---------------------------------------------------------------- derive-labels

struct DeriveReport {
  std::size_t written = 0;
  std::vector<Rejection> rejections;
};

/// Adds string valence and intensity fields to every JSONL line, keeping the
/// remaining fields and their order. Re-running on its own output changes
/// nothing. With `skip_bad` rejected lines are dropped; otherwise any
/// rejection leaves `out` untouched.
inline DeriveReport derive_labels(std::istream& in, std::ostream& out, const AffectSchema& schema,
                                  const CorpusFields& fields = {}, bool skip_bad = false) {
  DeriveReport report;
  std::vector<std::string> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::ordered_json::parse(line);
      if (!j.is_object()) throw DataError("line is not a JSON object");
      if (!j.contains(fields.text) || !j.at(fields.text).is_string()) {
        throw DataError("missing string field '" + fields.text + "'");
      }
      if (!j.contains(fields.label)) throw DataError("missing field '" + fields.label + "'");
      const std::size_t label = resolve_emotion_label(j.at(fields.label), schema);
      j["valence"] = to_string(schema.derive_valence(label));
      j["intensity"] = to_string(schema.derive_intensity(label));
      lines.push_back(j.dump());
    } catch (const nlohmann::json::exception& e) {
      report.rejections.push_back({line_no, std::string("malformed JSON: ") + e.what()});
    } catch (const LabelError& e) {
      report.rejections.push_back({line_no, e.what(), true});
    } catch (const DataError& e) {
      report.rejections.push_back({line_no, e.what()});
    }
  }
  if (!report.rejections.empty() && !skip_bad) return report;
  for (const auto& l : lines) out << l << '\n';
  report.written = lines.size();
  return report;
}

inline DeriveReport derive_labels_file(const std::string& input, const std::string& output, const AffectSchema& schema,
                                       const CorpusFields& fields = {}, bool skip_bad = false) {
  std::ifstream in(input);
  if (!in) throw DataError("cannot open corpus " + input);
  std::ostringstream buffer;
  DeriveReport report = derive_labels(in, buffer, schema, fields, skip_bad);
  if (!report.rejections.empty() && !skip_bad) return report;
  const auto parent = std::filesystem::path(output).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(output, std::ios::binary);
  if (!out) throw DataError("cannot write " + output);
  out << buffer.str();
  return report;
}

// ------------------------------------------------------------------------ train

namespace detail {

inline std::string describe_rejections(const std::vector<Rejection>& rejections, const std::string& path) {
  std::ostringstream msg;
  msg << path << ": " << rejections.size() << " rejected line(s)";
  for (std::size_t k = 0; k < std::min<std::size_t>(rejections.size(), 5); ++k) {
    msg << "\n  line " << rejections[k].line << ": " << rejections[k].reason;
  }
  return msg.str();
}

template <class Schema>
std::vector<LabeledExample> load_clean(const std::string& path, const Schema& schema, const CorpusFields& fields) {
  Corpus c = load_corpus(path, schema, fields);
  if (!c.rejections.empty()) throw DataError(describe_rejections(c.rejections, path));
  if (c.examples.empty()) throw DataError(path + ": no examples");
  return std::move(c.examples);
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,macro_f1,macro_recall,mean_confidence,combined_score\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.metrics.macro_f1) << ','
        << format_double(r.metrics.macro_recall) << ',' << format_double(r.metrics.mean_confidence) << ','
        << format_double(r.metrics.combined_score) << '\n';
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <TaskModel M>
nlohmann::json train_and_save(M& model, const nlohmann::json& schema_json, const RunConfig& cfg,
                              const std::vector<LabeledExample>& train_set,
                              const std::vector<LabeledExample>& validation, const Vocabulary& vocab,
                              std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  std::optional<SynonymLexicon> lexicon;
  std::optional<Augmentation> augmentation;
  if (cfg.train.augment) {
    lexicon = cfg.paths.lexicon.empty() ? SynonymLexicon::bundled() : SynonymLexicon::load(cfg.paths.lexicon);
    augmentation = Augmentation{&*lexicon, cfg.train.p_syn, cfg.train.p_del};
  }
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << "  loss " << std::fixed << std::setprecision(4) << r.train_loss << "  macro_f1 "
        << r.metrics.macro_f1 << "  confidence " << r.metrics.mean_confidence << "  combined "
        << r.metrics.combined_score << std::defaultfloat << '\n';
  };
  TrainResult result = train(model, vocab, train_set, validation, cfg.train, augmentation, hooks);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const EpochRecord& best = result.history[result.best_index];
  const Metrics train_metrics = evaluate(model, train_set, vocab, cfg.train.max_seq_len, cfg.train.eval_batch_size);

  const std::filesystem::path out_dir(cfg.paths.output_dir);
  std::filesystem::create_directories(out_dir);
  Checkpoint ckpt;
  ckpt.tensors = Checkpoint::capture(model.parameters());
  ckpt.config = to_json(cfg);
  ckpt.vocabulary = vocab.entries();
  ckpt.min_freq = vocab.min_frequency();
  ckpt.schema = schema_json;
  ckpt.epoch = best.epoch;
  ckpt.metrics = best.metrics;
  save_checkpoint(out_dir / "checkpoint", ckpt);
  write_metrics_csv(out_dir / "metrics.csv", result.history);

  nlohmann::json summary{{"task", to_string(cfg.task)},
                         {"best_epoch", best.epoch},
                         {"combined_score", best.metrics.combined_score},
                         {"best_metrics", to_json(best.metrics)},
                         {"train_accuracy", train_metrics.accuracy},
                         {"train_macro_f1", train_metrics.macro_f1},
                         {"epochs_run", result.history.size()},
                         {"optimizer_steps", result.optimizer_steps},
                         {"stopped_early", result.stopped_early},
                         {"train_examples", train_set.size()},
                         {"validation_examples", validation.size()},
                         {"vocabulary_size", vocab.size()},
                         {"wall_time_seconds", seconds},
                         {"config", ckpt.config}};
  write_json(out_dir / "summary.json", summary);
  return summary;
}

template <class Schema>
std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> load_splits(const RunConfig& cfg,
                                                                                const Schema& schema) {
  auto all = load_clean(cfg.paths.train, schema, cfg.fields);
  if (!cfg.paths.validation.empty()) return {std::move(all), load_clean(cfg.paths.validation, schema, cfg.fields)};
  auto [train_set, validation] = split_corpus(all, cfg.train.seed);
  if (train_set.empty() || validation.empty()) {
    throw DataError(cfg.paths.train + ": too few examples to hold out a validation split");
  }
  return {std::move(train_set), std::move(validation)};
}

}  // namespace detail

/// Trains per `cfg` and writes checkpoint/, metrics.csv and summary.json
/// under the output directory. Returns the summary.
inline nlohmann::json run_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (cfg.paths.train.empty()) throw ConfigError("no training corpus given (paths.train or --train)");
  Rng init(mix_seed(cfg.train.seed, 0));
  if (cfg.task == Task::emotion) {
    const AffectSchema schema = cfg.paths.schema.empty() ? default_affect_schema() : load_affect_schema(cfg.paths.schema);
    auto [train_set, validation] = detail::load_splits(cfg, schema);
    const Vocabulary vocab = build_vocab(train_set, cfg.train.min_freq);
    EmotionModel model(cfg.resolved_encoder(), vocab.size(), schema, cfg.loss, init);
    return detail::train_and_save(model, to_json(schema), cfg, train_set, validation, vocab, log);
  }
  const MentalHealthSchema schema = cfg.paths.schema.empty() ? MentalHealthSchema{} : load_mh_schema(cfg.paths.schema);
  auto [train_set, validation] = detail::load_splits(cfg, schema);
  const Vocabulary vocab = build_vocab(train_set, cfg.train.min_freq);
  MentalHealthModel model(cfg.resolved_encoder(), vocab.size(), schema, init);
  return detail::train_and_save(model, to_json(schema), cfg, train_set, validation, vocab, log);
}

// ------------------------------------------------------------------------- eval

struct EvalOptions {
  std::string checkpoint;
  std::string corpus;
  std::string output_dir;  // empty: the checkpoint's parent directory
  bool dump_predictions = false;
};

namespace detail {

inline std::filesystem::path default_eval_dir(const std::string& checkpoint) {
  std::filesystem::path p = std::filesystem::path(checkpoint).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
}

template <class Schema>
std::vector<LabeledExample> load_compatible(const std::string& path, const Schema& schema,
                                            const CorpusFields& fields) {
  Corpus c = load_corpus(path, schema, fields);
  for (const auto& r : c.rejections) {
    if (r.bad_label) {
      throw CompatibilityError(path + " line " + std::to_string(r.line) +
                               " is incompatible with the checkpoint schema: " + r.reason);
    }
  }
  if (!c.rejections.empty()) throw DataError(describe_rejections(c.rejections, path));
  if (c.examples.empty()) throw DataError(path + ": no examples");
  return std::move(c.examples);
}

template <TaskModel M>
nlohmann::json eval_and_write(const M& model, const std::vector<std::string>& class_names,
                              const std::vector<LabeledExample>& examples, const Vocabulary& vocab,
                              const RunConfig& cfg, const Checkpoint& ckpt, const EvalOptions& opt) {
  const Predictions pred = predict(model, examples, vocab, cfg.train.max_seq_len, cfg.train.eval_batch_size);
  std::vector<std::size_t> truth;
  for (const auto& e : examples) truth.push_back(e.label);
  const Metrics m = compute_metrics(truth, pred.predicted, pred.confidence, model.num_classes());

  nlohmann::json result = to_json(m);
  result["task"] = to_string(cfg.task);
  result["examples"] = examples.size();
  result["checkpoint_epoch"] = ckpt.epoch;
  result["classes"] = class_names;

  const std::filesystem::path out_dir = opt.output_dir.empty() ? default_eval_dir(opt.checkpoint)
                                                                       : std::filesystem::path(opt.output_dir);
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "eval_metrics.json", result);
  if (opt.dump_predictions) {
    std::ofstream out(out_dir / "predictions.csv");
    if (!out) throw DataError("cannot write " + (out_dir / "predictions.csv").string());
    out << "index,label,predicted,confidence\n";
    for (std::size_t k = 0; k < examples.size(); ++k) {
      out << k << ',' << class_names[truth[k]] << ',' << class_names[pred.predicted[k]] << ','
          << format_double(pred.confidence[k]) << '\n';
    }
  }
  return result;
}

}  // namespace detail

/// Rebuilds the model from a checkpoint, scores `opt.corpus` and writes
/// eval_metrics.json (plus predictions.csv on request).
inline nlohmann::json run_eval(const EvalOptions& opt) {
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
  RunConfig cfg;
  try {
    cfg = run_config_from_json(ckpt.config);
  } catch (const ConfigError& e) {
    throw CompatibilityError(std::string("checkpoint config unreadable: ") + e.what());
  }
  const Vocabulary vocab(ckpt.vocabulary, ckpt.min_freq);
  EncoderConfig enc = cfg.resolved_encoder();
  enc.dropout = 0.0;
  Rng unused(0);
  if (cfg.task == Task::emotion) {
    const AffectSchema schema = affect_schema_from_json(ckpt.schema);
    const auto examples = detail::load_compatible(opt.corpus, schema, cfg.fields);
    EmotionModel model(enc, vocab.size(), schema, cfg.loss, unused);
    auto params = model.parameters();
    apply_checkpoint(params, ckpt);
    return detail::eval_and_write(model, schema.taxonomy().emotions, examples, vocab, cfg, ckpt, opt);
  }
  const MentalHealthSchema schema = mh_schema_from_json(ckpt.schema);
  const auto examples = detail::load_compatible(opt.corpus, schema, cfg.fields);
  MentalHealthModel model(enc, vocab.size(), schema, unused);
  auto params = model.parameters();
  apply_checkpoint(params, ckpt);
  return detail::eval_and_write(model, schema.categories, examples, vocab, cfg, ckpt, opt);
}

// -------------------------------------------------------------------- gradcheck

inline GradCheckScope parse_scope(const std::string& s) {
  if (s == "losses") return GradCheckScope::losses;
  if (s == "encoder") return GradCheckScope::encoder;
  if (s == "gate") return GradCheckScope::gate;
  if (s == "all") return GradCheckScope::all;
  throw ConfigError("unknown gradcheck scope '" + s + "'");
}

/// Prints one row per component; true when every row is within tolerance.
inline bool print_gradcheck(const std::vector<GradCheckRow>& rows, double seconds, std::ostream& out) {
  bool ok = true;
  out << std::left << std::setw(9) << "scope" << std::setw(42) << "component" << std::right << std::setw(8)
      << "coords" << std::setw(14) << "max_rel_err" << "  status\n";
  for (const auto& r : rows) {
    ok = ok && r.passed;
    out << std::left << std::setw(9) << r.scope << std::setw(42) << r.name << std::right << std::setw(8)
        << r.coordinates << std::setw(14) << std::scientific << std::setprecision(3) << r.max_rel_error
        << std::defaultfloat << "  " << (r.passed ? "ok" : "FAIL") << '\n';
  }
  out << rows.size() << " checks, tolerance " << kGradCheckTolerance << ", " << std::fixed << std::setprecision(2)
      << seconds << " s" << std::defaultfloat << '\n';
  return ok;
}

}  // namespace cmhl
