#include <atomic>
#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "cmhl/trainer.hpp"
#include "support/scenarios.hpp"

using namespace cmhl;

namespace {

/// Class prior only: probs = softmax(w) for every row. `poison_after` makes
/// loss() return NaN from that call onwards.
class PriorModel {
 public:
  explicit PriorModel(std::size_t classes) : w_(Tensor::zeros({classes}, true)) {}

  ParamList parameters() const { return {{"prior.w", w_, true}}; }

  Tensor loss(const Batch& b, const ForwardContext&) const {
    if (poison_after_ && ++calls_ > *poison_after_) return Tensor::scalar(std::nan(""));
    return cross_entropy(probs(b.batch), b.labels);
  }

  Tensor primary_probs(const Batch& b) const { return probs(b.batch); }
  std::size_t num_classes() const { return w_.size(); }
  void poison_after(std::size_t calls) { poison_after_ = calls; }

 private:
  Tensor probs(std::size_t rows) const {
    Tensor ones = Tensor::full({rows, 1}, 1.0);
    return softmax(matmul(ones, reshape(w_, {1, w_.size()})));
  }

  Tensor w_;
  std::optional<std::size_t> poison_after_;
  mutable std::size_t calls_ = 0;
};

static_assert(TaskModel<PriorModel>);

std::vector<LabeledExample> small_corpus(std::size_t n) { return fixtures::synthetic_emotion_corpus(n, 5); }

}  // namespace

TEST(Train, AccumulationMatchesLargeBatchTrajectory) {
  EXPECT_LT(fixtures::accumulation_trajectory_gap(10), 1e-9);
}

TEST(Train, FixedSeedGivesIdenticalHistories) {
  const auto corpus = small_corpus(48);
  const Vocabulary vocab = build_vocab(corpus, 1);
  auto run = [&] {
    TrainConfig cfg = TrainConfig::emotion_preset();
    cfg.epochs = 3;
    cfg.learning_rate = 1e-3;
    cfg.augment = true;
    Rng init(mix_seed(cfg.seed, 0));
    EmotionModel model({1, 2, 16, 32, 256, cfg.dropout}, vocab.size(), default_affect_schema(), LossWeights{}, init);
    const auto lexicon = SynonymLexicon::bundled();
    return train(model, vocab, corpus, corpus, cfg, Augmentation{&lexicon, 0.1, 0.1});
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.history.size(), 3u);
  ASSERT_EQ(b.history.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].metrics.combined_score, b.history[e].metrics.combined_score);
  }
  EXPECT_EQ(a.best_params.values, b.best_params.values);
}

TEST(Train, StepCountFollowsBatchAndAccumulation) {
  const auto corpus = small_corpus(50);
  const Vocabulary vocab = build_vocab(corpus, 1);
  PriorModel model(6);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;  // 7 micro-batches, 4 steps per epoch
  cfg.grad_accumulation_steps = 2;
  auto result = train(model, vocab, corpus, corpus, cfg);
  EXPECT_EQ(result.optimizer_steps, 8u);
  EXPECT_EQ(cfg.steps_per_epoch(50), 4u);
}

TEST(Train, RestoresBestEpochWeights) {
  auto corpus = small_corpus(36);
  for (std::size_t i = 0; i < 12; ++i) corpus[i].label = 2;
  const Vocabulary vocab = build_vocab(corpus, 1);
  PriorModel model(6);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 0.5;
  std::vector<ParamSnapshot> per_epoch;
  TrainHooks hooks;
  auto params = model.parameters();
  hooks.on_epoch = [&](const EpochRecord&) { per_epoch.push_back(ParamSnapshot::take(params)); };
  auto result = train(model, vocab, corpus, corpus, cfg, std::nullopt, hooks);
  std::vector<Metrics> history;
  for (const auto& r : result.history) history.push_back(r.metrics);
  EXPECT_EQ(result.best_index, select_checkpoint(history));
  EXPECT_EQ(ParamSnapshot::take(params).values, per_epoch[result.best_index].values);
}

TEST(Train, EarlyStoppingWithMentalHealthPreset) {
  // A prior-only model cannot improve after it has fit the class balance.
  const auto corpus = small_corpus(24);
  const Vocabulary vocab = build_vocab(corpus, 1);
  PriorModel model(6);
  TrainConfig cfg = TrainConfig::mental_health_preset();
  cfg.warmup_steps = 0;
  auto result = train(model, vocab, corpus, corpus, cfg);
  EXPECT_LE(result.history.size(), 10u);
  EXPECT_TRUE(result.stopped_early);
  EXPECT_EQ(result.history.size(), result.best_index + 1 + *cfg.early_stop_patience);
}

TEST(Train, NonFiniteLossRaisesDivergenceWithLastGoodEpoch) {
  const auto corpus = small_corpus(32);
  const Vocabulary vocab = build_vocab(corpus, 1);
  PriorModel model(6);
  model.poison_after(5);  // 2 micro-batches per epoch
  TrainConfig cfg;
  cfg.epochs = 5;
  try {
    train(model, vocab, corpus, corpus, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.last_good_epoch(), 2);
  }
}

TEST(Train, RejectsBadConfigurations) {
  const auto corpus = small_corpus(16);
  const Vocabulary vocab = build_vocab(corpus, 1);
  PriorModel model(6);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.warmup_steps = 5;  // one step in total
  EXPECT_THROW(train(model, vocab, corpus, corpus, cfg), ConfigError);
  cfg.warmup_steps.reset();
  cfg.batch_size = 0;
  EXPECT_THROW(train(model, vocab, corpus, corpus, cfg), ConfigError);
  cfg.batch_size = 4;
  EXPECT_THROW(train(model, vocab, {}, corpus, cfg), ContractError);
}

TEST(Presets, MatchTheDocumentedValues) {
  const auto e = TrainConfig::emotion_preset();
  EXPECT_EQ(e.learning_rate, 2e-5);
  EXPECT_EQ(e.batch_size, 16u);
  EXPECT_EQ(e.grad_accumulation_steps, 2u);
  EXPECT_EQ(e.epochs, 5u);
  EXPECT_EQ(e.weight_decay, 0.01);
  EXPECT_EQ(e.warmup_for(1000), 100u);
  const auto m = TrainConfig::mental_health_preset();
  EXPECT_EQ(m.learning_rate, 1.5e-5);
  EXPECT_EQ(m.batch_size, 12u);
  EXPECT_EQ(m.epochs, 10u);
  EXPECT_EQ(m.early_stop_patience, 3u);
  EXPECT_EQ(m.dropout, 0.15);
  EXPECT_EQ(m.warmup_for(1000), 400u);
  EXPECT_TRUE(m.augment);
}

TEST(Prefetcher, DeliversInOrderThenEnds) {
  Prefetcher<int> p([](const std::function<bool(int)>& emit) {
    for (int i = 0; i < 100; ++i)
      if (!emit(i)) return;
  }, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(p.next(), i);
  EXPECT_FALSE(p.next().has_value());
}

TEST(Prefetcher, RethrowsProducerFailure) {
  Prefetcher<int> p([](const std::function<bool(int)>& emit) {
    emit(1);
    throw DataError("worker failed");
  }, 2);
  EXPECT_EQ(p.next(), 1);
  EXPECT_THROW(p.next(), DataError);
}

TEST(Prefetcher, AbandonedStreamShutsDownCleanly) {
  std::atomic<int> produced = 0;
  {
    Prefetcher<int> p([&](const std::function<bool(int)>& emit) {
      for (int i = 0; i < 1000000; ++i) {
        if (!emit(i)) return;
        ++produced;
      }
    }, 2);
    EXPECT_EQ(p.next(), 0);
  }
  EXPECT_LT(produced.load(), 1000000);
}
