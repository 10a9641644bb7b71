#include <cstdlib>

#include <gtest/gtest.h>

#include "cmhl/config.hpp"

using namespace cmhl;

TEST(RunConfig, PresetsAppliedBeforeOverrides) {
  auto c = run_config_from_json({{"task", "mental_health"}, {"train", {{"epochs", 4}}}});
  EXPECT_EQ(c.task, Task::mental_health);
  EXPECT_EQ(c.train.epochs, 4u);
  EXPECT_EQ(c.train.learning_rate, 1.5e-5);
  EXPECT_EQ(c.train.early_stop_patience, 3u);

  auto e = run_config_from_json({{"seed", 21}, {"encoder", {{"layers", 1}, {"hidden", 32}}}});
  EXPECT_EQ(e.task, Task::emotion);
  EXPECT_EQ(e.train.seed, 21u);
  EXPECT_EQ(e.encoder.layers, 1u);
  EXPECT_EQ(e.encoder.hidden, 32u);
  EXPECT_EQ(e.train.batch_size, 16u);
}

TEST(RunConfig, UnknownKeysRejected) {
  EXPECT_THROW(run_config_from_json({{"trian", {}}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"train", {{"lr", 1e-3}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"paths", {{"data", "x"}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"task", "vision"}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"train", {{"epochs", "many"}}}}), ConfigError);
}

TEST(RunConfig, ResolvedJsonRoundTrips) {
  auto c = run_config_from_json({{"task", "mental_health"},
                                 {"paths", {{"train", "a.jsonl"}}},
                                 {"train", {{"warmup_fraction", 0.2}, {"early_stop_patience", nullptr}}},
                                 {"loss", {{"lambda_excl", 0.0}}}});
  EXPECT_FALSE(c.train.warmup_steps.has_value());
  EXPECT_FALSE(c.train.early_stop_patience.has_value());
  auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.paths.train, "a.jsonl");
  EXPECT_EQ(back.loss.lambda_excl, 0.0);
}

TEST(RunConfig, SeedEnvironmentOverride) {
  RunConfig c;
  setenv("CMHL_SEED", "4242", 1);
  apply_seed_env(c);
  EXPECT_EQ(c.train.seed, 4242u);
  setenv("CMHL_SEED", "abc", 1);
  EXPECT_THROW(apply_seed_env(c), ConfigError);
  unsetenv("CMHL_SEED");
}

TEST(RunConfig, ValidationCatchesInconsistentEncoder) {
  RunConfig c;
  c.encoder.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.encoder.max_positions = 64;
  EXPECT_THROW(c.validate(), ConfigError);
  c.train.max_seq_len = 64;
  EXPECT_NO_THROW(c.validate());
}
