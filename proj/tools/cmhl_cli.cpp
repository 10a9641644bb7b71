#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cmhl/run.hpp"

namespace {

struct TrainFlags {
  std::string config;
  std::optional<std::string> task, train, validation, schema, lexicon, output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, grad_accum, warmup_steps, max_seq_len, patience;
  std::optional<std::size_t> layers, heads, hidden, ffn_dim;
  std::optional<double> learning_rate;
  bool augment = false, no_augment = false;
};

template <class T>
void set_if(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

cmhl::RunConfig resolve(const TrainFlags& f) {
  cmhl::RunConfig cfg;
  if (!f.config.empty()) {
    cfg = cmhl::load_run_config(f.config);
    if (f.task && cmhl::parse_task(*f.task) != cfg.task) {
      throw cmhl::ConfigError("--task " + *f.task + " contradicts the config file");
    }
  } else if (f.task) {
    cfg = cmhl::RunConfig::preset(cmhl::parse_task(*f.task));
  }
  cmhl::apply_seed_env(cfg);
  set_if(f.seed, cfg.train.seed);
  set_if(f.train, cfg.paths.train);
  set_if(f.validation, cfg.paths.validation);
  set_if(f.schema, cfg.paths.schema);
  set_if(f.lexicon, cfg.paths.lexicon);
  set_if(f.output_dir, cfg.paths.output_dir);
  set_if(f.epochs, cfg.train.epochs);
  set_if(f.batch_size, cfg.train.batch_size);
  set_if(f.grad_accum, cfg.train.grad_accumulation_steps);
  set_if(f.max_seq_len, cfg.train.max_seq_len);
  set_if(f.learning_rate, cfg.train.learning_rate);
  if (f.warmup_steps) cfg.train.warmup_steps = *f.warmup_steps;
  if (f.patience) cfg.train.early_stop_patience = *f.patience;
  if (f.augment) cfg.train.augment = true;
  if (f.no_augment) cfg.train.augment = false;
  set_if(f.layers, cfg.encoder.layers);
  set_if(f.heads, cfg.encoder.heads);
  set_if(f.hidden, cfg.encoder.hidden);
  set_if(f.ffn_dim, cfg.encoder.ffn_dim);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task emotion and mental-health text classification.", "cmhl"};
  app.require_subcommand(1);

  // derive-labels
  std::string dl_input, dl_output, dl_schema;
  cmhl::CorpusFields dl_fields;
  bool dl_skip_bad = false;
  auto* derive = app.add_subcommand("derive-labels", "Add valence and intensity fields to an emotion corpus.");
  derive->add_option("-i,--input", dl_input, "Input JSONL corpus")->required();
  derive->add_option("-o,--output", dl_output, "Output JSONL path")->required();
  derive->add_option("-s,--schema", dl_schema, "Affect schema JSON (default: built-in six-emotion schema)");
  derive->add_option("--text-field", dl_fields.text, "Name of the text field")->capture_default_str();
  derive->add_option("--label-field", dl_fields.label, "Name of the emotion label field")->capture_default_str();
  derive->add_flag("--skip-bad", dl_skip_bad, "Drop rejected lines instead of failing");

  // train
  TrainFlags tf;
  auto* trainc = app.add_subcommand("train", "Train a model and write checkpoint, metrics.csv and summary.json.");
  trainc->add_option("-c,--config", tf.config, "Run config JSON; flags below override it");
  trainc->add_option("--task", tf.task, "emotion or mental_health (selects the preset)");
  trainc->add_option("--train", tf.train, "Training corpus JSONL");
  trainc->add_option("--validation", tf.validation, "Validation corpus JSONL (default: split from --train)");
  trainc->add_option("--schema", tf.schema, "Label schema JSON");
  trainc->add_option("--lexicon", tf.lexicon, "Synonym lexicon for augmentation (default: built-in)");
  trainc->add_option("-o,--output-dir", tf.output_dir, "Directory receiving all outputs");
  trainc->add_option("--seed", tf.seed, "Random seed (overrides CMHL_SEED)");
  trainc->add_option("--epochs", tf.epochs, "Training epochs");
  trainc->add_option("--batch-size", tf.batch_size, "Micro-batch size");
  trainc->add_option("--grad-accum", tf.grad_accum, "Micro-batches per optimizer step");
  trainc->add_option("--learning-rate", tf.learning_rate, "Peak learning rate");
  trainc->add_option("--warmup-steps", tf.warmup_steps, "Absolute warmup steps");
  trainc->add_option("--max-seq-len", tf.max_seq_len, "Token cap per example, [CLS] included");
  trainc->add_option("--patience", tf.patience, "Early-stopping patience in epochs");
  trainc->add_option("--layers", tf.layers, "Encoder layers");
  trainc->add_option("--heads", tf.heads, "Attention heads per layer");
  trainc->add_option("--hidden", tf.hidden, "Hidden width");
  trainc->add_option("--ffn-dim", tf.ffn_dim, "Feed-forward width");
  auto* aug = trainc->add_flag("--augment", tf.augment, "Enable synonym and deletion augmentation");
  trainc->add_flag("--no-augment", tf.no_augment, "Disable augmentation")->excludes(aug);

  // eval
  cmhl::EvalOptions eo;
  auto* evalc = app.add_subcommand("eval", "Score a checkpoint on a labelled corpus.");
  evalc->add_option("-k,--checkpoint", eo.checkpoint, "Checkpoint directory")->required();
  evalc->add_option("--corpus", eo.corpus, "Labelled JSONL corpus")->required();
  evalc->add_option("-o,--output-dir", eo.output_dir, "Output directory (default: the checkpoint's parent)");
  evalc->add_flag("--dump-predictions", eo.dump_predictions, "Also write predictions.csv");

  // gradcheck
  std::string gc_scope = "all";
  double gc_corrupt = 0.0;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with central finite differences.");
  grad->add_option("--scope", gc_scope, "Components to check")
      ->check(CLI::IsMember({"losses", "encoder", "gate", "all"}))
      ->capture_default_str();
  grad->add_option("--corrupt-gradient", gc_corrupt,
                   "Test hook: add this offset to one analytic gradient entry per check")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*derive) {
      const auto schema = dl_schema.empty() ? cmhl::default_affect_schema() : cmhl::load_affect_schema(dl_schema);
      const auto report = cmhl::derive_labels_file(dl_input, dl_output, schema, dl_fields, dl_skip_bad);
      for (const auto& r : report.rejections) std::cerr << dl_input << ":" << r.line << ": " << r.reason << '\n';
      if (!report.rejections.empty() && !dl_skip_bad) {
        std::cerr << report.rejections.size() << " line(s) rejected; nothing written (use --skip-bad to drop them)\n";
        return 3;
      }
      std::cout << "wrote " << report.written << " line(s) to " << dl_output;
      if (!report.rejections.empty()) std::cout << ", skipped " << report.rejections.size();
      std::cout << '\n';
    } else if (*trainc) {
      const auto summary = cmhl::run_train(resolve(tf), std::cout);
      std::cout << "best epoch " << summary["best_epoch"] << ", combined score " << summary["combined_score"]
                << ", train accuracy " << summary["train_accuracy"] << ", " << summary["wall_time_seconds"]
                << " s\n";
    } else if (*evalc) {
      std::cout << cmhl::run_eval(eo).dump(2) << '\n';
    } else if (*grad) {
      const auto start = std::chrono::steady_clock::now();
      const auto rows = cmhl::run_gradcheck(cmhl::parse_scope(gc_scope), gc_corrupt);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (!cmhl::print_gradcheck(rows, seconds, std::cout)) return 4;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cmhl::exit_code_for(e);
  }
  return 0;
}
