#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cmhl/params.hpp"

namespace cmhl {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments of one tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One AdamW update of a single tensor. `t` is the 1-based step count used
/// for bias correction. Weight decay is decoupled: the parameter shrinks by
/// lr·decay before the adaptive step and never enters the moments.
inline void adamw_step(std::span<double> param, std::span<const double> grad, AdamMoments& state, std::size_t t,
                       double lr, double decay, const AdamWConfig& cfg = {}) {
  if (state.m.size() != param.size()) state.m.assign(param.size(), 0.0);
  if (state.v.size() != param.size()) state.v.assign(param.size(), 0.0);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    param[i] -= lr * decay * param[i];
    param[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps);
  }
}

class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig cfg = {}) : params_(std::move(params)), cfg_(cfg), state_(params_.size()) {}

  /// Applies one update from the accumulated gradients. A parameter without
  /// a gradient (unused in the graph) is treated as having zero gradient.
  void step(double lr, double weight_decay) {
    for (const auto& p : params_) {
      if (p.value.has_grad() && !all_finite(p.value.grad())) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
    ++t_;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      std::span<const double> grad = p.value.has_grad() ? p.value.grad() : std::span<const double>{};
      adamw_step(p.value.mutable_data(), grad, state_[k], t_, lr, p.decay ? weight_decay : 0.0, cfg_);
    }
  }

  void zero_grad() { zero_grads(params_); }
  std::size_t steps() const { return t_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  AdamWConfig cfg_;
  std::vector<AdamMoments> state_;
  std::size_t t_ = 0;
};

/// Linear warmup from 0 to `peak` over `warmup` steps, then linear decay to
/// 0 at `total_steps`.
inline double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup, double peak) {
  if (warmup >= total_steps) throw ConfigError("warmup must be shorter than the total step count");
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total_steps) return 0.0;
  return peak * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

}  // namespace cmhl
