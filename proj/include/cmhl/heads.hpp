#pragma once

#include <string>
#include <vector>

#include "cmhl/affect_schema.hpp"
#include "cmhl/data.hpp"
#include "cmhl/ops.hpp"
#include "cmhl/params.hpp"

namespace cmhl {

/// Emotion [C, d], valence [3, d] and intensity [2, d] projections.
struct EmotionHeadParams {
  Tensor we, be, wv, bv, wi, bi;

  static EmotionHeadParams init(std::size_t classes, std::size_t hidden, Rng& rng) {
    return {normal_param({classes, hidden}, rng), zeros_param({classes}),
            normal_param({kValenceClasses, hidden}, rng), zeros_param({kValenceClasses}),
            normal_param({kIntensityClasses, hidden}, rng), zeros_param({kIntensityClasses})};
  }

  ParamList parameters() const {
    return {{"heads.emotion.weight", we, true},   {"heads.emotion.bias", be, false},
            {"heads.valence.weight", wv, true},   {"heads.valence.bias", bv, false},
            {"heads.intensity.weight", wi, true}, {"heads.intensity.bias", bi, false}};
  }
};

struct EmotionPrediction {
  Tensor p_e;  // [B, C]
  Tensor p_v;  // [B, 3]
  Tensor p_i;  // [B, 2]
};

struct EmotionLabels {
  std::vector<std::size_t> emotion;
  std::vector<long> valence;    // -1 = absent
  std::vector<long> intensity;  // -1 = absent

  static EmotionLabels from(const Batch& b) { return {b.labels, b.valence, b.intensity}; }
};

/// Three softmax heads over the shared [CLS] representation.
inline EmotionPrediction emotion_heads_forward(const Tensor& h_cls, const EmotionHeadParams& p) {
  if (h_cls.rank() != 2 || h_cls.dim(1) != p.we.dim(1)) {
    throw ShapeError("emotion heads: representation " + shape_str(h_cls.shape()) + " vs weight " +
                     shape_str(p.we.shape()));
  }
  return {softmax(linear(h_cls, p.we, p.be)), softmax(linear(h_cls, p.wv, p.bv)),
          softmax(linear(h_cls, p.wi, p.bi))};
}

/// CE_e + α1·CE_v + α2·CE_i from already-reduced cross-entropies.
inline Tensor combine_task_loss(const Tensor& ce_e, const Tensor& ce_v, const Tensor& ce_i, const LossWeights& w) {
  w.validate();
  return add(add(ce_e, scale(ce_v, w.alpha1)), scale(ce_i, w.alpha2));
}

inline Tensor task_loss(const EmotionPrediction& pred, const EmotionLabels& labels, const LossWeights& w) {
  auto complete = [](const std::vector<long>& v) {
    return std::none_of(v.begin(), v.end(), [](long x) { return x < 0; });
  };
  if (!complete(labels.valence) || !complete(labels.intensity)) {
    throw ContractError("task_loss: valence and intensity labels must be present for every row");
  }
  return combine_task_loss(cross_entropy(pred.p_e, labels.emotion), masked_cross_entropy(pred.p_v, labels.valence),
                           masked_cross_entropy(pred.p_i, labels.intensity), w);
}

/// Σ_{i∈P} Σ_{j∈N} max(0, p_i + p_j − τ_ij) per row, averaged over rows.
inline Tensor exclusivity_loss(const Tensor& p_e, const ThresholdMatrix& tau, const AffectSchema& schema) {
  if (p_e.rank() != 2 || p_e.dim(1) != schema.size()) {
    throw ShapeError("exclusivity_loss: probabilities " + shape_str(p_e.shape()) + " vs " +
                     std::to_string(schema.size()) + " emotions");
  }
  const auto pairs = schema.opposing_pairs();
  if (pairs.empty()) return Tensor::scalar(0.0);
  std::vector<double> neg_tau;
  neg_tau.reserve(pairs.size());
  for (auto [i, j] : pairs) neg_tau.push_back(-tau.at(i, j));
  Tensor hinge = relu(add_constant(pair_sums(p_e, pairs), std::move(neg_tau)));
  return scale(sum(hinge), 1.0 / static_cast<double>(p_e.dim(0)));
}

inline Tensor total_loss(const EmotionPrediction& pred, const EmotionLabels& labels, const LossWeights& w,
                         const ThresholdMatrix& tau, const AffectSchema& schema) {
  return add(task_loss(pred, labels, w), scale(exclusivity_loss(pred.p_e, tau, schema), w.lambda_excl));
}

}  // namespace cmhl
