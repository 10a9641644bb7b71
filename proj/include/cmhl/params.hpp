#pragma once

#include <random>
#include <string>
#include <vector>

#include "cmhl/random.hpp"
#include "cmhl/tensor.hpp"

namespace cmhl {

/// A learnable tensor plus the metadata the optimizer and checkpoints need.
struct NamedParam {
  std::string name;
  Tensor value;
  /// Whether decoupled weight decay applies (weights yes; biases, norm gains
  /// and scalar mixing weights no).
  bool decay = true;
};

using ParamList = std::vector<NamedParam>;

/// Evaluation disables dropout; training draws masks from `rng`.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

inline constexpr double kInitStd = 0.02;

inline Tensor normal_param(Shape shape, Rng& rng, double stddev = kInitStd) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), true);
}

inline Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
inline Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

inline void zero_grads(ParamList& params) {
  for (auto& p : params) p.value.zero_grad();
}

inline std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

}  // namespace cmhl
