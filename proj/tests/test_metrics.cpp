#include <gtest/gtest.h>

#include "cmhl/metrics.hpp"

using namespace cmhl;

namespace {

Metrics with(double f1, double conf) {
  Metrics m;
  m.macro_f1 = f1;
  m.mean_confidence = conf;
  m.combined_score = combined_score(f1, conf);
  return m;
}

Metrics scored(double score) {
  Metrics m;
  m.combined_score = score;
  return m;
}

}  // namespace

TEST(Metrics, PerfectPredictions) {
  auto m = compute_metrics({0, 1, 2, 2}, {0, 1, 2, 2}, {1, 1, 1, 1}, 3);
  EXPECT_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.macro_recall, 1.0);
  EXPECT_EQ(m.accuracy, 1.0);
}

TEST(Metrics, TwoClassConfusionFixture) {
  // TP, FP, FN, TN with class 1 as the positive class.
  auto m = compute_metrics({1, 0, 1, 0}, {1, 1, 0, 0}, {0.9, 0.7, 0.6, 0.8}, 2);
  EXPECT_DOUBLE_EQ(m.macro_f1, 0.5);
  EXPECT_DOUBLE_EQ(m.macro_recall, 0.5);
  EXPECT_DOUBLE_EQ(m.mean_confidence, 0.75);
}

TEST(Metrics, MeanConfidence) {
  auto m = compute_metrics({0, 1}, {0, 1}, {0.9, 0.7}, 2);
  EXPECT_DOUBLE_EQ(m.mean_confidence, 0.8);
}

TEST(Metrics, AbsentClassesDoNotDiluteMacroAverages) {
  auto m = compute_metrics({0, 0, 1}, {0, 0, 1}, {1, 1, 1}, 6);
  EXPECT_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.per_class_recall.size(), 6u);
}

TEST(Metrics, ErrorCases) {
  EXPECT_THROW(compute_metrics({}, {}, {}, 2), ContractError);
  EXPECT_THROW(compute_metrics({0}, {0, 1}, {1}, 2), ContractError);
  EXPECT_THROW(compute_metrics({0}, {3}, {1}, 2), LabelError);
}

TEST(CombinedScore, Arithmetic) {
  EXPECT_NEAR(combined_score(0.9, 0.8), 0.87, 1e-15);
  EXPECT_NEAR(combined_score(0.92, 0.60), 0.824, 1e-15);
  EXPECT_NEAR(combined_score(0.88, 0.95), 0.901, 1e-15);
}

TEST(SelectCheckpoint, SingleEntry) {
  EXPECT_EQ(select_checkpoint({with(1.0, 1.0)}), 0u);
  EXPECT_DOUBLE_EQ(with(1.0, 1.0).combined_score, 1.0);
}

TEST(SelectCheckpoint, ConfidentModelWinsDespiteLowerF1) {
  EXPECT_EQ(select_checkpoint({with(0.92, 0.60), with(0.88, 0.95)}), 1u);
}

TEST(SelectCheckpoint, EarliestEpochWinsTies) {
  EXPECT_EQ(select_checkpoint({scored(0.5), scored(0.7), scored(0.7), scored(0.6)}), 1u);
  EXPECT_THROW(select_checkpoint({}), ContractError);
}

TEST(EarlyStopping, PatienceWalkThrough) {
  EarlyStopping stop(3);
  const std::vector<double> scores{0.5, 0.6, 0.59, 0.58, 0.57};
  std::vector<Metrics> history;
  std::size_t stopped_after = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    history.push_back(scored(scores[e]));
    if (stop.observe(scores[e])) {
      stopped_after = e + 1;
      break;
    }
  }
  EXPECT_EQ(stopped_after, 5u);
  EXPECT_EQ(select_checkpoint(history) + 1, 2u);
}

TEST(EarlyStopping, NeverFiresBeforePatiencePlusOneEvaluations) {
  for (std::size_t patience = 1; patience <= 4; ++patience) {
    EarlyStopping stop(patience);
    std::size_t evals = 0;
    while (!stop.observe(0.5)) ++evals;
    EXPECT_EQ(evals + 1, patience + 1);
  }
}

TEST(EarlyStopping, EqualScoreIsNotAnImprovement) {
  EarlyStopping stop(2);
  EXPECT_FALSE(stop.observe(0.7));
  EXPECT_FALSE(stop.observe(0.7));
  EXPECT_TRUE(stop.observe(0.7));
}

TEST(EarlyStopping, DisabledWithoutPatience) {
  EarlyStopping stop(std::nullopt);
  for (int i = 0; i < 50; ++i) EXPECT_FALSE(stop.observe(0.1));
}
