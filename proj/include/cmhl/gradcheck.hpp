#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmhl/tensor.hpp"

namespace cmhl {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  /// "<tensor index>:<flat offset>" of the worst coordinate.
  std::string worst;
};

namespace detail {

inline void check_step(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("finite_diff_check: eps must lie in [1e-7, 1e-3], got " + std::to_string(eps));
  }
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace detail

/// Compares the autodiff gradient of a scalar function of several tensors
/// against central differences. `loss_fn` must rebuild its graph on every
/// call from the current contents of `inputs`, which are perturbed in place
/// and restored. `corrupt_analytic` is added to the first analytic
/// coordinate; it exists so negative controls can prove the check bites.
inline GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                         std::span<Tensor> inputs, double eps,
                                         double corrupt_analytic = 0.0) {
  detail::check_step(eps);
  for (Tensor& t : inputs) {
    if (!t.requires_grad()) throw ContractError("finite_diff_check: inputs must require grad");
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  const double replay = loss_fn().item();
  if (loss.item() != replay) {
    throw DeterminismError("finite_diff_check: two forward passes disagree (" +
                           std::to_string(loss.item()) + " vs " + std::to_string(replay) + ")");
  }
  loss.backward();

  GradCheckReport report;
  bool corrupted = false;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    std::vector<double> analytic(inputs[t].grad().begin(), inputs[t].grad().end());
    if (!corrupted && !analytic.empty()) {
      analytic[0] += corrupt_analytic;
      corrupted = true;
    }
    auto values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss_fn().item();
      values[i] = saved - eps;
      const double down = loss_fn().item();
      values[i] = saved;
      const double err = detail::rel_error(analytic[i], (up - down) / (2.0 * eps));
      if (err > report.max_rel_error || report.coordinates == 0) {
        report.max_rel_error = err;
        report.worst = std::to_string(t) + ":" + std::to_string(i);
      }
      ++report.coordinates;
    }
  }
  return report;
}

/// Single-point form: `fn` maps a tensor to a scalar tensor. Returns the
/// maximum of |analytic − central difference| / max(1, |analytic|).
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                                double eps) {
  Tensor x = point.clone(true);
  std::vector<Tensor> inputs{x};
  return finite_diff_check([&] { return fn(x); }, inputs, eps).max_rel_error;
}

}  // namespace cmhl
