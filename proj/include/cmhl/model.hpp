#pragma once

#include <concepts>
#include <string>
#include <utility>

#include "cmhl/affect_schema.hpp"
#include "cmhl/encoder.hpp"
#include "cmhl/heads.hpp"
#include "cmhl/mh_gating.hpp"
#include "cmhl/mh_schema.hpp"

namespace cmhl {

/// What the trainer needs from a task model.
template <class M>
concept TaskModel = requires(const M& m, const Batch& b, const ForwardContext& ctx) {
  { m.parameters() } -> std::same_as<ParamList>;
  { m.loss(b, ctx) } -> std::same_as<Tensor>;
  { m.primary_probs(b) } -> std::same_as<Tensor>;
  { m.num_classes() } -> std::convertible_to<std::size_t>;
};

/// Encoder + emotion/valence/intensity heads trained with the composite
/// task + exclusivity objective.
class EmotionModel {
 public:
  EmotionModel(const EncoderConfig& cfg, std::size_t vocab_size, AffectSchema schema, LossWeights weights, Rng& rng)
      : encoder_(cfg, vocab_size, rng),
        heads_(EmotionHeadParams::init(schema.size(), cfg.hidden, rng)),
        schema_(std::move(schema)),
        tau_(schema_.thresholds()),
        weights_(weights) {
    weights_.validate();
  }

  EmotionPrediction forward(const Batch& batch, const ForwardContext& ctx = {}) const {
    return emotion_heads_forward(encoder_.forward(batch, ctx), heads_);
  }

  Tensor loss(const Batch& batch, const ForwardContext& ctx) const {
    return total_loss(forward(batch, ctx), EmotionLabels::from(batch), weights_, tau_, schema_);
  }

  Tensor primary_probs(const Batch& batch) const { return forward(batch).p_e; }
  std::size_t num_classes() const { return schema_.size(); }

  ParamList parameters() const {
    ParamList out = encoder_.parameters();
    for (auto& p : heads_.parameters()) out.push_back(std::move(p));
    return out;
  }

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  EmotionHeadParams& heads() { return heads_; }
  const AffectSchema& schema() const { return schema_; }
  const ThresholdMatrix& thresholds() const { return tau_; }
  const LossWeights& loss_weights() const { return weights_; }
  void set_loss_weights(LossWeights w) {
    w.validate();
    weights_ = w;
  }

 private:
  Encoder encoder_;
  EmotionHeadParams heads_;
  AffectSchema schema_;
  ThresholdMatrix tau_;
  LossWeights weights_;
};

/// Encoder + diagnosis/severity heads, gated fusion and the β-weighted loss.
/// The primary output is the fused prediction.
class MentalHealthModel {
 public:
  MentalHealthModel(const EncoderConfig& cfg, std::size_t vocab_size, MentalHealthSchema schema, Rng& rng,
                    std::size_t gate_bottleneck = kGateBottleneck)
      : encoder_(cfg, vocab_size, rng),
        heads_(MHHeadParams::init(schema.size(), cfg.hidden, rng, gate_bottleneck)),
        schema_(std::move(schema)) {}

  MHPrediction forward(const Batch& batch, const ForwardContext& ctx = {}) const {
    return mh_forward(encoder_.forward(batch, ctx), heads_);
  }

  Tensor loss(const Batch& batch, const ForwardContext& ctx) const {
    auto pred = forward(batch, ctx);
    return mh_loss(pred.p_final, pred.p_i, batch.labels, batch.intensity, heads_.beta_raw);
  }

  Tensor primary_probs(const Batch& batch) const { return forward(batch).p_final; }
  std::size_t num_classes() const { return schema_.size(); }

  ParamList parameters() const {
    ParamList out = encoder_.parameters();
    for (auto& p : heads_.parameters()) out.push_back(std::move(p));
    return out;
  }

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  MHHeadParams& heads() { return heads_; }
  const MHHeadParams& heads() const { return heads_; }
  const MentalHealthSchema& schema() const { return schema_; }

 private:
  Encoder encoder_;
  MHHeadParams heads_;
  MentalHealthSchema schema_;
};

static_assert(TaskModel<EmotionModel>);
static_assert(TaskModel<MentalHealthModel>);

}  // namespace cmhl
