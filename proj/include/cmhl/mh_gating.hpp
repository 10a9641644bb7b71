#pragma once

#include <cmath>
#include <tuple>
#include <utility>
#include <vector>

#include "cmhl/mh_schema.hpp"
#include "cmhl/ops.hpp"
#include "cmhl/params.hpp"

namespace cmhl {

inline constexpr std::size_t kGateBottleneck = 128;
inline constexpr double kInitialBeta = 0.4;

/// Unconstrained value whose softplus equals `beta`.
inline double beta_to_raw(double beta) { return std::log(std::expm1(beta)); }
inline double raw_to_beta(double raw) { return raw > 0.0 ? raw + std::log1p(std::exp(-raw)) : std::log1p(std::exp(raw)); }

/// Diagnosis and severity heads, the two-way gate, the fusion head and the
/// severity loss weight β (stored pre-softplus).
struct MHHeadParams {
  Tensor wm, bm;    // [M, d], [M]
  Tensor wi, bi;    // [3, d], [3]
  Tensor wb, bb;    // [d_g, M+3], [d_g]
  Tensor wa, ba;    // [2, d_g], [2]
  Tensor wf, bf;    // [M, M+3], [M]
  Tensor beta_raw;  // [1]

  static MHHeadParams init(std::size_t categories, std::size_t hidden, Rng& rng,
                           std::size_t bottleneck = kGateBottleneck) {
    const std::size_t F = categories + kSeverityLevels;
    return {normal_param({categories, hidden}, rng), zeros_param({categories}),
            normal_param({kSeverityLevels, hidden}, rng), zeros_param({kSeverityLevels}),
            normal_param({bottleneck, F}, rng), zeros_param({bottleneck}),
            normal_param({2, bottleneck}, rng), zeros_param({2}),
            normal_param({categories, F}, rng), zeros_param({categories}),
            Tensor::scalar(beta_to_raw(kInitialBeta), true)};
  }

  std::size_t categories() const { return wm.dim(0); }
  double effective_beta() const { return raw_to_beta(beta_raw.item()); }

  ParamList parameters() const {
    return {{"heads.diagnosis.weight", wm, true}, {"heads.diagnosis.bias", bm, false},
            {"heads.severity.weight", wi, true},  {"heads.severity.bias", bi, false},
            {"gate.bottleneck.weight", wb, true}, {"gate.bottleneck.bias", bb, false},
            {"gate.attention.weight", wa, true},  {"gate.attention.bias", ba, false},
            {"fusion.weight", wf, true},          {"fusion.bias", bf, false},
            {"loss.beta_raw", beta_raw, false}};
  }
};

/// Diagnosis [B, M] and severity [B, 3] distributions from the shared [CLS].
inline std::pair<Tensor, Tensor> mh_heads_forward(const Tensor& h_cls, const MHHeadParams& p) {
  if (h_cls.rank() != 2 || h_cls.dim(1) != p.wm.dim(1)) {
    throw ShapeError("mental-health heads: representation " + shape_str(h_cls.shape()) + " vs weight " +
                     shape_str(p.wm.shape()));
  }
  return {softmax(linear(h_cls, p.wm, p.bm)), softmax(linear(h_cls, p.wi, p.bi))};
}

/// a = softmax(W_a · ReLU(W_b F + b_b) + b_a), one [a_m, a_i] row per input.
inline Tensor gate_weights(const Tensor& features, const MHHeadParams& p) {
  if (features.rank() != 2 || features.dim(1) != p.wb.dim(1)) {
    throw ShapeError("gate: features " + shape_str(features.shape()) + " vs " + shape_str(p.wb.shape()));
  }
  return softmax(linear(relu(linear(features, p.wb, p.bb)), p.wa, p.ba));
}

/// Block form: [a_m·p_m, a_i·p_i'].
inline Tensor gated_fusion(const Tensor& p_m, const Tensor& p_i, const Tensor& a) {
  if (a.rank() != 2 || a.dim(1) != 2) throw ShapeError("gated_fusion: gate must be [B, 2]");
  return concat_columns(scale_rows(p_m, column(a, 0)), scale_rows(p_i, column(a, 1)));
}

/// Broadcast form: a ⊙ F with a_m spread over the first `categories` columns
/// of F and a_i over the rest.
inline Tensor broadcast_gating(const Tensor& features, const Tensor& a, std::size_t categories) {
  if (features.rank() != 2 || features.dim(1) <= categories) throw ShapeError("broadcast_gating: bad feature width");
  return mul(expand_blocks(a, {categories, features.dim(1) - categories}), features);
}

inline Tensor final_prediction(const Tensor& gated, const MHHeadParams& p) {
  if (gated.rank() != 2 || gated.dim(1) != p.wf.dim(1)) {
    throw ShapeError("final head: features " + shape_str(gated.shape()) + " vs " + shape_str(p.wf.shape()));
  }
  return softmax(linear(gated, p.wf, p.bf));
}

struct MHPrediction {
  Tensor p_m;      // diagnosis head [B, M]
  Tensor p_i;      // severity head [B, 3]
  Tensor gate;     // [B, 2]
  Tensor gated;    // [B, M+3]
  Tensor p_final;  // [B, M]
};

inline MHPrediction mh_forward(const Tensor& h_cls, const MHHeadParams& p) {
  MHPrediction out;
  std::tie(out.p_m, out.p_i) = mh_heads_forward(h_cls, p);
  out.gate = gate_weights(concat_columns(out.p_m, out.p_i), p);
  out.gated = gated_fusion(out.p_m, out.p_i, out.gate);
  out.p_final = final_prediction(out.gated, p);
  return out;
}

/// CE_m + softplus(β_raw)·CE_i' from reduced cross-entropies.
inline Tensor combine_mh_loss(const Tensor& ce_m, const Tensor& ce_i, const Tensor& beta_raw) {
  return add(ce_m, mul(softplus(beta_raw), ce_i));
}

/// Severity CE is a masked mean over rows carrying a severity label (-1 marks
/// absence); with none labeled the second term vanishes.
inline Tensor mh_loss(const Tensor& p_final, const Tensor& p_i, const std::vector<std::size_t>& labels_m,
                      const std::vector<long>& labels_i, const Tensor& beta_raw) {
  if (labels_m.empty()) throw ContractError("mh_loss: batch has no labeled examples");
  return combine_mh_loss(cross_entropy(p_final, labels_m), masked_cross_entropy(p_i, labels_i), beta_raw);
}

}  // namespace cmhl
