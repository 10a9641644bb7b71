#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cmhl/checkpoint.hpp"
#include "cmhl/trainer.hpp"
#include "support/synthetic.hpp"

using namespace cmhl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("cmhl_ckpt_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Checkpoint, RoundTripReproducesEvaluation) {
  const auto corpus = fixtures::synthetic_emotion_corpus(40, 3);
  const Vocabulary vocab = build_vocab(corpus, 1);
  const EncoderConfig enc{1, 2, 16, 32, 64, 0.0};
  Rng rng(1);
  EmotionModel model(enc, vocab.size(), default_affect_schema(), LossWeights{}, rng);
  const Metrics before = evaluate(model, corpus, vocab, 64);

  Checkpoint ckpt;
  ckpt.tensors = Checkpoint::capture(model.parameters());
  ckpt.vocabulary = vocab.entries();
  ckpt.schema = to_json(model.schema());
  ckpt.config = {{"note", "fixture"}};
  ckpt.epoch = 3;
  ckpt.metrics = before;
  const fs::path dir = scratch("roundtrip");
  save_checkpoint(dir, ckpt);

  const Checkpoint loaded = load_checkpoint(dir);
  EXPECT_EQ(loaded.epoch, 3u);
  EXPECT_EQ(loaded.vocabulary, vocab.entries());
  EXPECT_EQ(loaded.config, ckpt.config);
  Rng other(99);
  EmotionModel restored(enc, vocab.size(), affect_schema_from_json(loaded.schema), LossWeights{}, other);
  auto params = restored.parameters();
  apply_checkpoint(params, loaded);
  const Metrics after = evaluate(restored, corpus, Vocabulary(loaded.vocabulary, loaded.min_freq), 64);
  EXPECT_NEAR(after.macro_f1, before.macro_f1, 1e-12);
  EXPECT_NEAR(after.mean_confidence, before.mean_confidence, 1e-12);
  EXPECT_NEAR(after.combined_score, before.combined_score, 1e-12);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto orig = model.parameters()[k].value.data();
    EXPECT_TRUE(std::equal(orig.begin(), orig.end(), params[k].value.data().begin())) << params[k].name;
  }
  fs::remove_all(dir);
}

TEST(Checkpoint, TensorFilesAreRawLittleEndianFloat64) {
  Checkpoint ckpt;
  ckpt.tensors = {{"t", {3}, {1.0, -2.5, 0.125}}};
  const fs::path dir = scratch("raw");
  save_checkpoint(dir, ckpt);
  EXPECT_EQ(fs::file_size(dir / "tensor_000.bin"), 24u);
  std::ifstream in(dir / "tensor_000.bin", std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  // 1.0 = 0x3FF0000000000000, least significant byte first.
  EXPECT_EQ(bytes[7], 0x3F);
  EXPECT_EQ(bytes[6], 0xF0);
  EXPECT_EQ(bytes[0], 0x00);
  nlohmann::json manifest;
  std::ifstream(dir / "manifest.json") >> manifest;
  EXPECT_EQ(manifest["format"], "cmhl-checkpoint");
  EXPECT_EQ(manifest["tensors"][0]["dtype"], "float64");
  EXPECT_EQ(manifest["tensors"][0]["shape"], nlohmann::json::array({3}));
  fs::remove_all(dir);
}

TEST(Checkpoint, MismatchesAreCompatibilityErrors) {
  Tensor w = Tensor::zeros({2, 2}, true);
  ParamList params{{"w", w, true}};
  Checkpoint wrong_shape;
  wrong_shape.tensors = {{"w", {4}, {0, 0, 0, 0}}};
  EXPECT_THROW(apply_checkpoint(params, wrong_shape), CompatibilityError);
  Checkpoint wrong_name;
  wrong_name.tensors = {{"v", {2, 2}, {0, 0, 0, 0}}};
  EXPECT_THROW(apply_checkpoint(params, wrong_name), CompatibilityError);
}

TEST(Checkpoint, CorruptContainersAreDataErrors) {
  const fs::path dir = scratch("corrupt");
  EXPECT_THROW(load_checkpoint(dir), DataError);
  Checkpoint ckpt;
  ckpt.tensors = {{"t", {2}, {1.0, 2.0}}};
  save_checkpoint(dir, ckpt);
  fs::resize_file(dir / "tensor_000.bin", 12);
  EXPECT_THROW(load_checkpoint(dir), DataError);
  fs::remove_all(dir);
}
