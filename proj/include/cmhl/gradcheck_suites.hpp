#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "cmhl/gradcheck.hpp"
#include "cmhl/model.hpp"

namespace cmhl {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-6;

enum class GradCheckScope { losses, encoder, gate, all };

struct GradCheckRow {
  std::string scope;
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double stddev, bool requires_grad = true) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

inline GradCheckRow run_check(const std::string& scope, const std::string& name, const std::function<Tensor()>& fn,
                              std::vector<Tensor> inputs, double corrupt) {
  auto report = finite_diff_check(fn, inputs, kGradCheckStep, corrupt);
  return {scope, name, report.coordinates, report.max_rel_error, report.max_rel_error < kGradCheckTolerance};
}

inline std::vector<Tensor> values_of(const ParamList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

/// Five-position toy batch over a 12-token vocabulary, second row padded.
inline Batch toy_batch(const Vocabulary& vocab) {
  std::vector<LabeledExample> examples{{"i feel glad and calm", 1, 0, 0, {}}, {"so angry now", 3, 1, 0, {}},
                                       {"sad tired", 0, 1, 1, {}}};
  return encode_batch(examples, vocab, 5, Padding::max_length);
}

inline Vocabulary toy_vocab() {
  return Vocabulary({"i", "feel", "glad", "and", "calm", "so", "angry", "now", "sad", "tired"}, 1);
}

}  // namespace detail

inline std::vector<GradCheckRow> gradcheck_losses(double corrupt = 0.0) {
  std::vector<GradCheckRow> rows;
  Rng rng(101);
  const auto schema = default_affect_schema();
  const auto tau = schema.thresholds();
  const LossWeights weights;
  const std::size_t B = 4;
  Tensor le = detail::random_tensor({B, 6}, rng, 2.0);
  Tensor lv = detail::random_tensor({B, 3}, rng, 1.0);
  Tensor li = detail::random_tensor({B, 2}, rng, 1.0);
  const EmotionLabels labels{{1, 3, 0, 5}, {0, 1, 1, 2}, {0, 0, 1, 0}};
  auto preds = [&] { return EmotionPrediction{softmax(le), softmax(lv), softmax(li)}; };

  rows.push_back(detail::run_check("losses", "task_loss", [&] { return task_loss(preds(), labels, weights); },
                                   {le, lv, li}, corrupt));
  rows.push_back(detail::run_check("losses", "exclusivity_loss",
                                   [&] { return exclusivity_loss(softmax(le), tau, schema); }, {le}, corrupt));
  rows.push_back(detail::run_check("losses", "total_loss",
                                   [&] { return total_loss(preds(), labels, weights, tau, schema); }, {le, lv, li},
                                   corrupt));

  Tensor lm = detail::random_tensor({B, 5}, rng, 1.0);
  Tensor ls = detail::random_tensor({B, 3}, rng, 1.0);
  Tensor beta = Tensor::scalar(beta_to_raw(kInitialBeta), true);
  const std::vector<std::size_t> ym{0, 4, 2, 1};
  const std::vector<long> yi{2, -1, 0, 1};
  rows.push_back(detail::run_check("losses", "mh_loss",
                                   [&] { return mh_loss(softmax(lm), softmax(ls), ym, yi, beta); }, {lm, ls, beta},
                                   corrupt));
  return rows;
}

inline std::vector<GradCheckRow> gradcheck_gate(double corrupt = 0.0) {
  std::vector<GradCheckRow> rows;
  Rng rng(202);
  const std::size_t M = 5, B = 3;
  MHHeadParams p = MHHeadParams::init(M, 8, rng);
  // Wider than the training init so the fixture exercises non-trivial gates.
  for (Tensor* t : {&p.wb, &p.wa, &p.wf})
    for (double& v : t->mutable_data()) v *= 25.0;
  Tensor lm = detail::random_tensor({B, M}, rng, 1.0);
  Tensor ls = detail::random_tensor({B, kSeverityLevels}, rng, 1.0);
  const std::vector<std::size_t> y{1, 0, 4};
  std::vector<Tensor> inputs{lm, ls, p.wb, p.bb, p.wa, p.ba, p.wf, p.bf};

  rows.push_back(detail::run_check("gate", "gate+fusion+final (block form)", [&] {
    Tensor pm = softmax(lm), pi = softmax(ls);
    Tensor a = gate_weights(concat_columns(pm, pi), p);
    return cross_entropy(final_prediction(gated_fusion(pm, pi, a), p), y);
  }, inputs, corrupt));
  rows.push_back(detail::run_check("gate", "gate+fusion+final (broadcast form)", [&] {
    Tensor pm = softmax(lm), pi = softmax(ls);
    Tensor f = concat_columns(pm, pi);
    return cross_entropy(final_prediction(broadcast_gating(f, gate_weights(f, p), M), p), y);
  }, inputs, corrupt));
  return rows;
}

inline std::vector<GradCheckRow> gradcheck_encoder(double corrupt = 0.0) {
  std::vector<GradCheckRow> rows;
  const Vocabulary vocab = detail::toy_vocab();
  const Batch batch = detail::toy_batch(vocab);
  EncoderConfig cfg{2, 2, 8, 16, 8, 0.0};
  {
    Rng rng(303);
    EmotionModel model(cfg, vocab.size(), default_affect_schema(), LossWeights{}, rng);
    // Larger weights push attention away from uniform so every path carries signal.
    for (auto& p : model.parameters())
      if (p.decay)
        for (double& v : p.value.mutable_data()) v *= 20.0;
    ForwardContext eval;
    rows.push_back(detail::run_check("encoder", "emotion model total_loss (L=2, H=2, d=8)",
                                     [&] { return model.loss(batch, eval); }, detail::values_of(model.parameters()),
                                     corrupt));
  }
  {
    Rng rng(404);
    EncoderConfig one = cfg;
    one.layers = 1;
    MentalHealthModel model(one, vocab.size(), MentalHealthSchema{}, rng, 16);
    for (auto& p : model.parameters())
      if (p.decay)
        for (double& v : p.value.mutable_data()) v *= 20.0;
    Batch mh = batch;
    mh.labels = {0, 3, 1};
    mh.intensity = {2, -1, 0};
    ForwardContext eval;
    rows.push_back(detail::run_check("encoder", "mental-health model mh_loss (L=1, H=2, d=8)",
                                     [&] { return model.loss(mh, eval); }, detail::values_of(model.parameters()),
                                     corrupt));
  }
  return rows;
}

inline std::vector<GradCheckRow> run_gradcheck(GradCheckScope scope, double corrupt = 0.0) {
  std::vector<GradCheckRow> rows;
  auto append = [&](std::vector<GradCheckRow> more) { rows.insert(rows.end(), more.begin(), more.end()); };
  if (scope == GradCheckScope::losses || scope == GradCheckScope::all) append(gradcheck_losses(corrupt));
  if (scope == GradCheckScope::gate || scope == GradCheckScope::all) append(gradcheck_gate(corrupt));
  if (scope == GradCheckScope::encoder || scope == GradCheckScope::all) append(gradcheck_encoder(corrupt));
  return rows;
}

}  // namespace cmhl
