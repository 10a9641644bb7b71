#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmhl/data.hpp"
#include "cmhl/metrics.hpp"
#include "cmhl/model.hpp"
#include "cmhl/optim.hpp"
#include "cmhl/prefetch.hpp"

namespace cmhl {

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  /// Absolute warmup steps take precedence over the fraction.
  std::optional<std::size_t> warmup_steps;
  double warmup_fraction = 0.1;
  std::size_t batch_size = 16;
  std::size_t grad_accumulation_steps = 2;
  std::size_t epochs = 5;
  std::size_t max_seq_len = kMaxSequenceLength;
  double dropout = 0.1;
  std::optional<std::size_t> early_stop_patience;
  std::uint64_t seed = 13;
  std::size_t min_freq = 1;
  bool augment = false;
  double p_syn = 0.1;
  double p_del = 0.1;
  std::size_t eval_batch_size = 64;
  std::size_t prefetch_depth = 4;

  static TrainConfig emotion_preset() { return {}; }

  static TrainConfig mental_health_preset() {
    TrainConfig c;
    c.learning_rate = 1.5e-5;
    c.batch_size = 12;
    c.grad_accumulation_steps = 1;
    c.epochs = 10;
    c.early_stop_patience = 3;
    c.dropout = 0.15;
    c.warmup_steps = 400;
    c.augment = true;
    return c;
  }

  std::size_t warmup_for(std::size_t total_steps) const {
    if (warmup_steps) return *warmup_steps;
    return static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  }

  std::size_t steps_per_epoch(std::size_t examples) const {
    const std::size_t micro = (examples + batch_size - 1) / batch_size;
    return (micro + grad_accumulation_steps - 1) / grad_accumulation_steps;
  }

  void validate() const {
    if (!(learning_rate > 0.0) || weight_decay < 0.0) throw ConfigError("learning rate must be positive, decay non-negative");
    if (batch_size == 0 || grad_accumulation_steps == 0 || epochs == 0) {
      throw ConfigError("batch size, accumulation steps and epochs must be positive");
    }
    if (max_seq_len < 2 || max_seq_len > kMaxSequenceLength) throw ConfigError("max_seq_len must lie in [2, 256]");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup fraction must lie in [0, 1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(p_syn >= 0.0 && p_syn <= 1.0 && p_del >= 0.0 && p_del <= 1.0)) {
      throw ConfigError("augmentation probabilities must lie in [0, 1]");
    }
  }
};

/// Copy of every parameter's values, in ParamList order.
struct ParamSnapshot {
  std::vector<std::vector<double>> values;

  static ParamSnapshot take(const ParamList& params) {
    ParamSnapshot s;
    for (const auto& p : params) s.values.emplace_back(p.value.data().begin(), p.value.data().end());
    return s;
  }

  void restore(ParamList& params) const {
    if (params.size() != values.size()) throw ContractError("snapshot does not match parameter list");
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto dst = params[k].value.mutable_data();
      std::copy(values[k].begin(), values[k].end(), dst.begin());
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  Metrics metrics;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_index = 0;
  ParamSnapshot best_params;
  std::size_t optimizer_steps = 0;
  bool stopped_early = false;
};

struct TrainHooks {
  /// Called after every optimizer step with the 1-based step count.
  std::function<void(std::size_t, const ParamList&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct Predictions {
  std::vector<std::size_t> predicted;
  std::vector<double> confidence;
  std::vector<std::vector<double>> probs;
};

/// Eval-mode primary-head outputs in example order.
template <TaskModel M>
Predictions predict(const M& model, const std::vector<LabeledExample>& examples, const Vocabulary& vocab,
                    std::size_t max_len, std::size_t batch_size = 64) {
  Predictions out;
  const std::size_t C = model.num_classes();
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    std::vector<LabeledExample> chunk(examples.begin() + static_cast<std::ptrdiff_t>(start),
                                      examples.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor probs = model.primary_probs(encode_batch(chunk, vocab, max_len, Padding::longest));
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      std::vector<double> row(probs.data().begin() + static_cast<std::ptrdiff_t>(r * C),
                              probs.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * C));
      const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      out.predicted.push_back(top);
      out.confidence.push_back(row[top]);
      out.probs.push_back(std::move(row));
    }
  }
  return out;
}

template <TaskModel M>
Metrics evaluate(const M& model, const std::vector<LabeledExample>& examples, const Vocabulary& vocab,
                 std::size_t max_len, std::size_t batch_size = 64) {
  if (examples.empty()) throw ContractError("evaluate: empty evaluation set");
  auto pred = predict(model, examples, vocab, max_len, batch_size);
  std::vector<std::size_t> truth;
  truth.reserve(examples.size());
  for (const auto& e : examples) truth.push_back(e.label);
  return compute_metrics(truth, pred.predicted, pred.confidence, model.num_classes());
}

/// Optional training-time augmentation (synonym substitution + deletion).
struct Augmentation {
  const SynonymLexicon* lexicon = nullptr;
  double p_syn = 0.1;
  double p_del = 0.1;
};

/// Trains `model` in place and returns the per-epoch history together with
/// the snapshot of the best-scoring epoch; the model is left holding those
/// best weights. Loss is averaged over the micro-batches of each optimizer
/// step. Batches are assembled on a worker thread; each example's
/// augmentation stream is seeded from (seed, epoch, example index).
template <TaskModel M>
TrainResult train(M& model, const Vocabulary& vocab, const std::vector<LabeledExample>& train_set,
                  const std::vector<LabeledExample>& validation, const TrainConfig& cfg,
                  std::optional<Augmentation> augmentation = std::nullopt, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  if (validation.empty()) throw ContractError("train: empty validation set");

  const std::size_t steps_per_epoch = cfg.steps_per_epoch(train_set.size());
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t warmup = cfg.warmup_for(total_steps);
  lr_at(0, total_steps, warmup, cfg.learning_rate);  // validates warmup < total

  ParamList params = model.parameters();
  AdamW optimizer(params);
  Rng shuffle_rng(mix_seed(cfg.seed, 1));
  Rng dropout_rng(mix_seed(cfg.seed, 2));
  EarlyStopping stopper(cfg.early_stop_patience);

  TrainResult result;
  std::size_t step = 0;
  int last_good_epoch = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);

    const std::uint64_t epoch_seed = mix_seed(cfg.seed, 1000 + epoch);
    Prefetcher<Batch> batches(
        [&](const std::function<bool(Batch)>& emit) {
          for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<LabeledExample> chunk;
            for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
              const auto& ex = train_set[order[k]];
              if (augmentation && augmentation->lexicon) {
                Rng ex_rng(mix_seed(epoch_seed, order[k]));
                chunk.push_back(augment(ex, ex_rng, augmentation->p_syn, augmentation->p_del, *augmentation->lexicon));
              } else {
                chunk.push_back(ex);
              }
            }
            if (!emit(encode_batch(chunk, vocab, cfg.max_seq_len, Padding::longest))) return;
          }
        },
        cfg.prefetch_depth);

    const std::size_t micro_batches = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
    double loss_sum = 0.0;
    for (std::size_t group_start = 0; group_start < micro_batches; group_start += cfg.grad_accumulation_steps) {
      const std::size_t group = std::min(cfg.grad_accumulation_steps, micro_batches - group_start);
      optimizer.zero_grad();
      for (std::size_t g = 0; g < group; ++g) {
        auto batch = batches.next();
        if (!batch) throw ContractError("train: batch stream ended early");
        ForwardContext ctx{true, &dropout_rng};
        Tensor loss = model.loss(*batch, ctx);
        if (!std::isfinite(loss.item())) {
          throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch) +
                                    " (last good epoch " + std::to_string(last_good_epoch) + ")",
                                last_good_epoch);
        }
        loss_sum += loss.item() * static_cast<double>(batch->batch);
        scale(loss, 1.0 / static_cast<double>(group)).backward();
      }
      try {
        optimizer.step(lr_at(step, total_steps, warmup, cfg.learning_rate), cfg.weight_decay);
      } catch (const NumericError& e) {
        throw DivergenceError(std::string(e.what()) + " (last good epoch " + std::to_string(last_good_epoch) + ")",
                              last_good_epoch);
      }
      ++step;
      if (hooks.on_step) hooks.on_step(step, params);
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(train_set.size()),
                       evaluate(model, validation, vocab, cfg.max_seq_len, cfg.eval_batch_size)};
    result.history.push_back(record);
    if (result.history.size() == 1 || record.metrics.combined_score > result.history[result.best_index].metrics.combined_score) {
      result.best_index = result.history.size() - 1;
      result.best_params = ParamSnapshot::take(params);
    }
    last_good_epoch = static_cast<int>(epoch);
    if (hooks.on_epoch) hooks.on_epoch(record);
    if (stopper.observe(record.metrics.combined_score)) {
      result.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  result.optimizer_steps = step;
  result.best_params.restore(params);
  return result;
}

}  // namespace cmhl
