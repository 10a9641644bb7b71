#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <vector>

#include "cmhl/errors.hpp"

namespace cmhl {

inline constexpr double kF1Weight = 0.7;
inline constexpr double kConfidenceWeight = 0.3;

inline double combined_score(double macro_f1, double mean_confidence) {
  return kF1Weight * macro_f1 + kConfidenceWeight * mean_confidence;
}

struct Metrics {
  double macro_f1 = 0.0;
  std::vector<double> per_class_recall;
  double macro_recall = 0.0;
  double mean_confidence = 0.0;
  double combined_score = 0.0;
  double accuracy = 0.0;
};

/// Classification metrics of argmax predictions. Macro averages run over the
/// classes that occur in either the truth or the predictions; a class with
/// no support has recall 0 in `per_class_recall`.
inline Metrics compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                               const std::vector<double>& confidence, std::size_t num_classes) {
  if (truth.empty()) throw ContractError("evaluation set is empty");
  if (predicted.size() != truth.size() || confidence.size() != truth.size()) {
    throw ContractError("metrics: predictions, confidences and labels differ in length");
  }
  std::vector<double> tp(num_classes), fp(num_classes), fn(num_classes);
  std::set<std::size_t> seen;
  double correct = 0.0, conf_sum = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] >= num_classes || predicted[k] >= num_classes) throw LabelError("metrics: class index out of range");
    seen.insert(truth[k]);
    seen.insert(predicted[k]);
    if (truth[k] == predicted[k]) {
      tp[truth[k]] += 1;
      correct += 1;
    } else {
      fp[predicted[k]] += 1;
      fn[truth[k]] += 1;
    }
    conf_sum += confidence[k];
  }
  Metrics m;
  m.per_class_recall.assign(num_classes, 0.0);
  double f1_sum = 0.0, recall_sum = 0.0;
  for (std::size_t c : seen) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0 ? 2 * tp[c] / denom : 0.0;
    if (tp[c] + fn[c] > 0) m.per_class_recall[c] = tp[c] / (tp[c] + fn[c]);
    recall_sum += m.per_class_recall[c];
  }
  const auto n = static_cast<double>(truth.size());
  m.macro_f1 = f1_sum / static_cast<double>(seen.size());
  m.macro_recall = recall_sum / static_cast<double>(seen.size());
  m.mean_confidence = conf_sum / n;
  m.accuracy = correct / n;
  m.combined_score = combined_score(m.macro_f1, m.mean_confidence);
  return m;
}

/// Index of the highest combined score; the earliest wins ties.
inline std::size_t select_checkpoint(const std::vector<Metrics>& history) {
  if (history.empty()) throw ContractError("select_checkpoint: empty history");
  std::size_t best = 0;
  for (std::size_t k = 1; k < history.size(); ++k)
    if (history[k].combined_score > history[best].combined_score) best = k;
  return best;
}

/// Stops once `patience` consecutive evaluations fail to beat the best
/// combined score.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::optional<std::size_t> patience) : patience_(patience) {}

  /// Records one evaluation; returns true when training should stop.
  bool observe(double score) {
    if (!seen_ || score > best_) {
      seen_ = true;
      best_ = score;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return patience_ && stale_ >= *patience_;
  }

 private:
  std::optional<std::size_t> patience_;
  bool seen_ = false;
  double best_ = 0.0;
  std::size_t stale_ = 0;
};

}  // namespace cmhl
