#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cmhl/cmhl.hpp"
#include "support/scenarios.hpp"
#include "support/synthetic.hpp"

using namespace cmhl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int exit_code = -1;
  std::string out;
};

/// Runs the built executable through the shell; stderr is discarded unless
/// the command redirects it.
Outcome cmhl_run(const std::string& args) {
  const std::string cmd = std::string(CMHL_CLI_PATH) + " " + args;
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int status = pclose(pipe);
  o.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("cmhl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Writes examples as JSONL with emotion names as labels.
void write_emotion_corpus(const fs::path& p, const std::vector<LabeledExample>& examples) {
  const AffectSchema schema = default_affect_schema();
  std::string text;
  for (const auto& e : examples) text += nlohmann::json{{"text", e.text}, {"label", schema.name(e.label)}}.dump() + "\n";
  spit(p, text);
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

const std::string kToyEncoder = "--layers 1 --heads 2 --hidden 16 --ffn-dim 32 --max-seq-len 32";

}  // namespace

// ------------------------------------------------------------------- help text

class HelpSnapshot : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpSnapshot, MatchesStoredText) {
  const std::string sub = GetParam();
  const Outcome o = cmhl_run((sub == "main" ? std::string() : sub + " ") + "--help");
  EXPECT_EQ(o.exit_code, 0);
  const fs::path snap = fs::path(CMHL_SOURCE_DIR) / "tests" / "snapshots" / ("help_" + sub + ".txt");
  if (std::getenv("CMHL_UPDATE_SNAPSHOTS")) spit(snap, o.out);
  ASSERT_TRUE(fs::exists(snap)) << "missing snapshot " << snap << " (rerun with CMHL_UPDATE_SNAPSHOTS=1)";
  EXPECT_EQ(o.out, slurp(snap));
}

INSTANTIATE_TEST_SUITE_P(Cli, HelpSnapshot,
                         ::testing::Values("main", "derive-labels", "train", "eval", "gradcheck"),
                         [](const auto& info) {
                           std::string n = info.param;
                           for (char& c : n)
                             if (c == '-') c = '_';
                           return n;
                         });

TEST(CliHelp, TrainHelpListsEveryOverride) {
  const std::string help = cmhl_run("train --help").out;
  for (const char* flag : {"--config", "--task", "--train", "--validation", "--schema", "--lexicon", "--output-dir",
                           "--seed", "--epochs", "--batch-size", "--grad-accum", "--learning-rate", "--warmup-steps",
                           "--max-seq-len", "--patience", "--layers", "--heads", "--hidden", "--ffn-dim", "--augment",
                           "--no-augment"}) {
    EXPECT_NE(help.find(flag), std::string::npos) << flag;
  }
}

// --------------------------------------------------------------- derive-labels

TEST(CliDeriveLabels, SixEmotionTable) {
  const fs::path dir = scratch("derive_table");
  std::string in;
  for (const char* e : {"sadness", "joy", "love", "anger", "fear", "surprise"}) {
    in += nlohmann::json{{"text", std::string("i feel ") + e}, {"label", e}}.dump() + "\n";
  }
  spit(dir / "in.jsonl", in);
  ASSERT_EQ(cmhl_run("derive-labels -i " + q(dir / "in.jsonl") + " -o " + q(dir / "out.jsonl")).exit_code, 0);

  const std::map<std::string, std::pair<std::string, std::string>> expected{
      {"sadness", {"negative", "low"}}, {"joy", {"positive", "high"}}, {"love", {"positive", "low"}},
      {"anger", {"negative", "high"}},  {"fear", {"negative", "high"}}, {"surprise", {"neutral", "high"}}};
  std::istringstream out(slurp(dir / "out.jsonl"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(out, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto& want = expected.at(j.at("label").get<std::string>());
    EXPECT_EQ(j.at("valence"), want.first) << line;
    EXPECT_EQ(j.at("intensity"), want.second) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 6u);
}

TEST(CliDeriveLabels, IdempotentAndFieldOrderPreserving) {
  const fs::path dir = scratch("derive_idem");
  spit(dir / "in.jsonl",
       "{\"id\":7,\"text\":\"so glad\",\"label\":\"joy\",\"extra\":[1,2.5]}\n"
       "{\"text\":\"n\\u00e9e tired\",\"label\":0,\"split\":\"train\"}\n");
  ASSERT_EQ(cmhl_run("derive-labels -i " + q(dir / "in.jsonl") + " -o " + q(dir / "a.jsonl")).exit_code, 0);
  ASSERT_EQ(cmhl_run("derive-labels -i " + q(dir / "a.jsonl") + " -o " + q(dir / "b.jsonl")).exit_code, 0);
  ASSERT_EQ(cmhl_run("derive-labels -i " + q(dir / "in.jsonl") + " -o " + q(dir / "c.jsonl")).exit_code, 0);
  const std::string a = slurp(dir / "a.jsonl");
  EXPECT_EQ(a, slurp(dir / "b.jsonl"));
  EXPECT_EQ(a, slurp(dir / "c.jsonl"));
  EXPECT_EQ(a.substr(0, a.find('\n')),
            "{\"id\":7,\"text\":\"so glad\",\"label\":\"joy\",\"extra\":[1,2.5],\"valence\":\"positive\","
            "\"intensity\":\"high\"}");
}

TEST(CliDeriveLabels, RejectedLinesFailUnlessSkipped) {
  const fs::path dir = scratch("derive_bad");
  spit(dir / "in.jsonl", "{\"text\":\"fine\",\"label\":\"joy\"}\n{\"text\":\"meh\",\"label\":\"boredom\"}\nnot json\n");
  const Outcome strict = cmhl_run("derive-labels -i " + q(dir / "in.jsonl") + " -o " + q(dir / "out.jsonl") + " 2>&1");
  EXPECT_EQ(strict.exit_code, 3);
  EXPECT_NE(strict.out.find("boredom"), std::string::npos);
  EXPECT_NE(strict.out.find(":3:"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out.jsonl"));

  const Outcome lax =
      cmhl_run("derive-labels --skip-bad -i " + q(dir / "in.jsonl") + " -o " + q(dir / "out.jsonl") + " 2>/dev/null");
  EXPECT_EQ(lax.exit_code, 0);
  EXPECT_EQ(slurp(dir / "out.jsonl"), "{\"text\":\"fine\",\"label\":\"joy\",\"valence\":\"positive\",\"intensity\":\"high\"}\n");
}

TEST(CliDeriveLabels, CustomFieldNames) {
  const fs::path dir = scratch("derive_fields");
  spit(dir / "in.jsonl", "{\"content\":\"so scared\",\"emotion\":\"fear\"}\n");
  ASSERT_EQ(cmhl_run("derive-labels --text-field content --label-field emotion -i " + q(dir / "in.jsonl") + " -o " +
                     q(dir / "out.jsonl"))
                .exit_code,
            0);
  EXPECT_EQ(slurp(dir / "out.jsonl"),
            "{\"content\":\"so scared\",\"emotion\":\"fear\",\"valence\":\"negative\",\"intensity\":\"high\"}\n");
}

// ------------------------------------------------------------------- exit codes

TEST(CliExitCodes, ParseAndConfigErrorsAreTwo) {
  EXPECT_EQ(cmhl_run("2>/dev/null").exit_code, 2);
  EXPECT_EQ(cmhl_run("frobnicate 2>/dev/null").exit_code, 2);
  EXPECT_EQ(cmhl_run("gradcheck --scope nothing 2>/dev/null").exit_code, 2);
  EXPECT_EQ(cmhl_run("train --task emotion 2>/dev/null").exit_code, 2);

  const fs::path dir = scratch("config_err");
  spit(dir / "c.json", R"({"train": {"lr": 0.1}})");
  EXPECT_EQ(cmhl_run("train -c " + q(dir / "c.json") + " 2>/dev/null").exit_code, 2);
  spit(dir / "w.json", R"({"train": {"warmup_steps": 1000, "epochs": 1}, "paths": {"train": ")" +
                           (fs::path(CMHL_SOURCE_DIR) / "data" / "sample_emotion.jsonl").string() + R"("}})");
  EXPECT_EQ(cmhl_run("train -c " + q(dir / "w.json") + " -o " + q(dir / "run") + " 2>/dev/null").exit_code, 2);
  EXPECT_FALSE(fs::exists(dir / "run" / "summary.json"));
}

TEST(CliExitCodes, MissingDataIsThree) {
  const fs::path dir = scratch("data_err");
  EXPECT_EQ(cmhl_run("train --train " + q(dir / "absent.jsonl") + " -o " + q(dir) + " 2>/dev/null").exit_code, 3);
  EXPECT_EQ(cmhl_run("eval -k " + q(dir / "absent") + " --corpus " + q(dir / "x.jsonl") + " 2>/dev/null").exit_code, 3);
}

TEST(CliGradcheck, LossesPassOnCleanBuild) {
  const Outcome o = cmhl_run("gradcheck --scope losses");
  EXPECT_EQ(o.exit_code, 0) << o.out;
  for (const char* row : {"task_loss", "exclusivity_loss", "total_loss", "mh_loss"}) {
    EXPECT_NE(o.out.find(row), std::string::npos) << row;
  }
  EXPECT_EQ(o.out.find("FAIL"), std::string::npos);
}

TEST(CliGradcheck, CorruptedGradientExitsNonzero) {
  const Outcome o = cmhl_run("gradcheck --scope gate --corrupt-gradient 0.01");
  EXPECT_EQ(o.exit_code, 4);
  EXPECT_NE(o.out.find("FAIL"), std::string::npos);
}

// ------------------------------------------------------------------ train/eval

TEST(CliTrain, SameSeedGivesIdenticalMetrics) {
  const fs::path dir = scratch("determinism");
  write_emotion_corpus(dir / "corpus.jsonl", fixtures::synthetic_emotion_corpus(96, 5));
  const std::string base = "train --train " + q(dir / "corpus.jsonl") + " " + kToyEncoder +
                           " --epochs 3 --learning-rate 0.001 --seed 9 --augment -o ";
  ASSERT_EQ(cmhl_run(base + q(dir / "a")).exit_code, 0);
  ASSERT_EQ(cmhl_run(base + q(dir / "b")).exit_code, 0);
  const std::string csv = slurp(dir / "a" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,macro_f1,macro_recall,mean_confidence,combined_score");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv, slurp(dir / "b" / "metrics.csv"));
  // Manifests differ only in the recorded output directory.
  std::size_t tensors = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a" / "checkpoint")) {
    if (entry.path().extension() != ".bin") continue;
    ++tensors;
    EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / "checkpoint" / entry.path().filename())) << entry.path();
  }
  EXPECT_GT(tensors, 0u);
  const auto summary = read_json(dir / "a" / "summary.json");
  for (const char* key : {"best_epoch", "combined_score", "wall_time_seconds", "train_accuracy", "config"}) {
    EXPECT_TRUE(summary.contains(key)) << key;
  }
  EXPECT_EQ(summary["config"]["train"]["learning_rate"], 0.001);
  EXPECT_EQ(summary["config"]["encoder"]["hidden"], 16);
}

TEST(CliTrain, SeedPrecedenceFileThenEnvThenFlag) {
  const fs::path dir = scratch("seed");
  write_emotion_corpus(dir / "corpus.jsonl", fixtures::synthetic_emotion_corpus(40, 5));
  spit(dir / "c.json", R"({"seed": 3, "train": {"epochs": 1, "learning_rate": 0.001}})");
  const std::string base = "train -c " + q(dir / "c.json") + " --train " + q(dir / "corpus.jsonl") + " " + kToyEncoder;
  ASSERT_EQ(cmhl_run(base + " -o " + q(dir / "file")).exit_code, 0);
  EXPECT_EQ(read_json(dir / "file" / "summary.json")["config"]["seed"], 3);
  const std::string env = "CMHL_SEED=41 " + std::string(CMHL_CLI_PATH) + " ";
  ASSERT_EQ(std::system((env + base + " -o " + q(dir / "env") + " >/dev/null").c_str()), 0);
  EXPECT_EQ(read_json(dir / "env" / "summary.json")["config"]["seed"], 41);
  ASSERT_EQ(std::system((env + base + " --seed 42 -o " + q(dir / "flag") + " >/dev/null").c_str()), 0);
  EXPECT_EQ(read_json(dir / "flag" / "summary.json")["config"]["seed"], 42);
}

TEST(CliTrain, MentalHealthPresetHonoursEarlyStopping) {
  const fs::path dir = scratch("mh");
  const fs::path corpus = fs::path(CMHL_SOURCE_DIR) / "data" / "sample_mental_health.jsonl";
  ASSERT_EQ(cmhl_run("train --task mental_health --train " + q(corpus) + " " + kToyEncoder + " --warmup-steps 3 -o " +
                     q(dir))
                .exit_code,
            0);
  const auto s = read_json(dir / "summary.json");
  EXPECT_EQ(s["config"]["train"]["early_stop_patience"], 3);
  EXPECT_EQ(s["config"]["train"]["epochs"], 10);
  const auto epochs_run = s["epochs_run"].get<std::size_t>();
  EXPECT_LE(epochs_run, 10u);
  if (s["stopped_early"].get<bool>()) {
    EXPECT_EQ(epochs_run, s["best_epoch"].get<std::size_t>() + 3);
  }
}

TEST(CliEval, RepeatableAndWritesPredictions) {
  const fs::path dir = scratch("eval");
  write_emotion_corpus(dir / "corpus.jsonl", fixtures::synthetic_emotion_corpus(60, 8));
  ASSERT_EQ(cmhl_run("train --train " + q(dir / "corpus.jsonl") + " " + kToyEncoder +
                     " --epochs 2 --learning-rate 0.001 -o " + q(dir / "run"))
                .exit_code,
            0);
  const std::string eval = "eval -k " + q(dir / "run" / "checkpoint") + " --corpus " + q(dir / "corpus.jsonl");
  ASSERT_EQ(cmhl_run(eval + " --dump-predictions").exit_code, 0);
  ASSERT_EQ(cmhl_run(eval + " -o " + q(dir / "second")).exit_code, 0);
  EXPECT_EQ(slurp(dir / "run" / "eval_metrics.json"), slurp(dir / "second" / "eval_metrics.json"));
  const auto m = read_json(dir / "run" / "eval_metrics.json");
  for (const char* key : {"macro_f1", "macro_recall", "mean_confidence", "combined_score"}) {
    EXPECT_TRUE(m.contains(key)) << key;
  }
  EXPECT_NEAR(m["combined_score"].get<double>(),
              0.7 * m["macro_f1"].get<double>() + 0.3 * m["mean_confidence"].get<double>(), 1e-15);
  const std::string preds = slurp(dir / "run" / "predictions.csv");
  EXPECT_EQ(std::count(preds.begin(), preds.end(), '\n'), 61);
  EXPECT_EQ(preds.substr(0, preds.find('\n')), "index,label,predicted,confidence");
}

TEST(CliEval, UnknownLabelIsCompatibilityError) {
  const fs::path dir = scratch("eval_compat");
  write_emotion_corpus(dir / "corpus.jsonl", fixtures::synthetic_emotion_corpus(40, 8));
  ASSERT_EQ(cmhl_run("train --train " + q(dir / "corpus.jsonl") + " " + kToyEncoder + " --epochs 1 -o " + q(dir / "run"))
                .exit_code,
            0);
  spit(dir / "odd.jsonl", "{\"text\":\"i feel calm\",\"label\":\"joy\"}\n{\"text\":\"meh\",\"label\":\"boredom\"}\n");
  const Outcome o = cmhl_run("eval -k " + q(dir / "run" / "checkpoint") + " --corpus " + q(dir / "odd.jsonl") + " 2>&1");
  EXPECT_EQ(o.exit_code, 3);
  EXPECT_NE(o.out.find("boredom"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("incompatible"), std::string::npos) << o.out;
}

// Emotion preset without warmup, desk encoder, 64-example fixture, at most
// 300 optimizer steps; the training fixture doubles as validation.
TEST(CliTrain, OverfitsSmallFixture) {
  const fs::path dir = scratch("overfit");
  const auto corpus = fixtures::synthetic_emotion_corpus(64, fixtures::kFixtureSeed, 1, 0.0);
  write_emotion_corpus(dir / "corpus.jsonl", corpus);
  const std::size_t epochs = 300 / TrainConfig::emotion_preset().steps_per_epoch(corpus.size());
  const std::string data = " --train " + q(dir / "corpus.jsonl") + " --validation " + q(dir / "corpus.jsonl");
  const Outcome o = cmhl_run("train --task emotion" + data + " --layers 2 --heads 4 --hidden 64 --ffn-dim 256" +
                             " --warmup-steps 0 --epochs " + std::to_string(epochs) + " -o " + q(dir / "run"));
  ASSERT_EQ(o.exit_code, 0);
  const auto s = read_json(dir / "run" / "summary.json");
  EXPECT_LE(s["optimizer_steps"].get<std::size_t>(), 300u);
  EXPECT_GE(s["train_accuracy"].get<double>(), 0.95);

  ASSERT_EQ(cmhl_run("eval -k " + q(dir / "run" / "checkpoint") + " --corpus " + q(dir / "corpus.jsonl")).exit_code, 0);
  EXPECT_GE(read_json(dir / "run" / "eval_metrics.json")["macro_f1"].get<double>(), 0.95);
}
