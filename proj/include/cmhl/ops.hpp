#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "cmhl/random.hpp"
#include "cmhl/tensor.hpp"

// Differentiable primitives. Every op takes and returns Tensor values and
// records a backward closure when any input requires a gradient.

namespace cmhl {

/// Log-argument clamp shared by every cross-entropy.
inline constexpr double kLogEpsilon = 1e-12;
inline constexpr double kLayerNormEpsilon = 1e-5;

namespace detail {

inline double* grad_of(Node* n) { return n->requires_grad ? n->ensure_grad().data() : nullptr; }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

template <class F, class DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  std::vector<double> out(a.size());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Node* an = a.node().get();
  return make_result(a.shape(), std::move(out), op, {a}, [an, df](Node& o) {
    double* ga = grad_of(an);
    if (!ga) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * df(an->data[i], o.data[i]);
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_result(a.shape(), std::move(out), "add", {a, b}, [an, bn](detail::Node& o) {
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    if (double* gb = detail::grad_of(bn))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_result(a.shape(), std::move(out), "sub", {a, b}, [an, bn](detail::Node& o) {
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    if (double* gb = detail::grad_of(bn))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i];
  });
}

/// Elementwise product of equal shapes.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_result(a.shape(), std::move(out), "mul", {a, b}, [an, bn](detail::Node& o) {
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * bn->data[i];
    if (double* gb = detail::grad_of(bn))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * an->data[i];
  });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(a, "scale", [c](double x) { return c * x; },
                       [c](double, double) { return c; });
}

/// Adds a constant (non-differentiable) tensor. `c` either matches `a`
/// elementwise or has the length of the last axis and repeats per row.
inline Tensor add_constant(const Tensor& a, std::vector<double> c) {
  const std::size_t last = a.shape().back();
  if (c.size() != a.size() && c.size() != last) {
    throw ShapeError("add_constant: constant of length " + std::to_string(c.size()) +
                     " does not fit " + shape_str(a.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + c[c.size() == last ? i % last : i];
  auto* an = a.node().get();
  return detail::make_result(a.shape(), std::move(out), "add_constant", {a}, [an](detail::Node& o) {
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor& a) {
  return detail::unary(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

inline Tensor softplus(const Tensor& a) {
  return detail::unary(
      a, "softplus",
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto* an = a.node().get();
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result(std::move(shape), std::move(out), "reshape", {a}, [an](detail::Node& o) {
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto* an = a.node().get();
  return detail::make_result({1}, {s}, "sum", {a}, [an](detail::Node& o) {
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < an->data.size(); ++i) ga[i] += o.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Row-wise softmax over the last axis, computed with max subtraction.
inline Tensor softmax(const Tensor& logits) {
  if (!all_finite(logits.data())) throw NumericError("softmax: non-finite input");
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.size() / k;
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data().data() + r * k;
    double* y = out.data() + r * k;
    const double hi = *std::max_element(x, x + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (y[j] = std::exp(x[j] - hi));
    for (std::size_t j = 0; j < k; ++j) y[j] /= z;
  }
  auto* xn = logits.node().get();
  return detail::make_result(logits.shape(), std::move(out), "softmax", {logits},
                             [xn, k, rows](detail::Node& o) {
    double* gx = detail::grad_of(xn);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o.data.data() + r * k;
      const double* g = o.grad.data() + r * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += y[j] * (g[j] - dot);
    }
  });
}

/// Mean negative log-likelihood of integer labels under row probabilities.
/// Rows whose label is negative are skipped; the mean runs over the rest and
/// an all-skipped batch yields a constant zero. Log arguments are clamped at
/// kLogEpsilon, where the gradient is zero.
inline Tensor masked_cross_entropy(const Tensor& probs, const std::vector<long>& labels) {
  detail::require_rank(probs, 2, "cross_entropy");
  const std::size_t rows = probs.dim(0);
  const std::size_t k = probs.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0) continue;
    if (static_cast<std::size_t>(labels[r]) >= k) {
      throw LabelError("cross_entropy: label " + std::to_string(labels[r]) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    total -= std::log(std::max(probs[r * k + labels[r]], kLogEpsilon));
    ++count;
  }
  if (count == 0) return Tensor::scalar(0.0);
  const double n = static_cast<double>(count);
  auto* pn = probs.node().get();
  return detail::make_result({1}, {total / n}, "cross_entropy", {probs},
                             [pn, labels, k, n](detail::Node& o) {
    double* gp = detail::grad_of(pn);
    if (!gp) return;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r] < 0) continue;
      const std::size_t idx = r * k + static_cast<std::size_t>(labels[r]);
      if (pn->data[idx] > kLogEpsilon) gp[idx] -= o.grad[0] / (n * pn->data[idx]);
    }
  });
}

inline Tensor cross_entropy(const Tensor& probs, const std::vector<std::size_t>& labels) {
  std::vector<long> l(labels.begin(), labels.end());
  return masked_cross_entropy(probs, l);
}

/// x[..., in] · Wᵀ + b with W stored [out, in]; `bias` may be undefined.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
  detail::require_rank(weight, 2, "linear");
  const std::size_t out_dim = weight.dim(0);
  const std::size_t in_dim = weight.dim(1);
  if (x.shape().back() != in_dim) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " vs " + std::to_string(out_dim));
  }
  const std::size_t rows = x.size() / in_dim;
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  const double* X = x.data().data();
  const double* W = weight.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = bias.defined() ? bias[o] : 0.0;
      const double* xr = X + r * in_dim;
      const double* wr = W + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) acc += xr[i] * wr[i];
      out[r * out_dim + o] = acc;
    }
  }
  auto* xn = x.node().get();
  auto* wn = weight.node().get();
  auto* bn = bias.defined() ? bias.node().get() : nullptr;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_result(std::move(shape), std::move(out), "linear", std::move(inputs),
                             [xn, wn, bn, rows, in_dim, out_dim](detail::Node& o) {
    const double* G = o.grad.data();
    if (double* gx = detail::grad_of(xn)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < out_dim; ++k) {
          const double g = G[r * out_dim + k];
          if (g == 0.0) continue;
          const double* wr = wn->data.data() + k * in_dim;
          double* gr = gx + r * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) gr[i] += g * wr[i];
        }
    }
    if (double* gw = detail::grad_of(wn)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < out_dim; ++k) {
          const double g = G[r * out_dim + k];
          if (g == 0.0) continue;
          const double* xr = xn->data.data() + r * in_dim;
          double* gr = gw + k * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) gr[i] += g * xr[i];
        }
    }
    if (bn) {
      if (double* gb = detail::grad_of(bn))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < out_dim; ++k) gb[k] += G[r * out_dim + k];
    }
  });
}

/// Plain 2-D product a[m, k] · b[k, n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
    }
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_result({m, n}, std::move(out), "matmul", {a, b},
                             [an, bn, m, k, n](detail::Node& o) {
    const double* G = o.grad.data();
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * bn->data[p * n + j];
          ga[i * k + p] += acc;
        }
    if (double* gb = detail::grad_of(bn))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = an->data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
        }
  });
}

/// Batched a[g, m, k] · b[g, k, n].
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 3, "bmm");
  detail::require_rank(b, 3, "bmm");
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != g || b.dim(1) != k) {
    throw ShapeError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(g * m * n, 0.0);
  for (std::size_t s = 0; s < g; ++s) {
    const double* A = a.data().data() + s * m * k;
    const double* B = b.data().data() + s * k * n;
    double* C = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += av * B[p * n + j];
      }
  }
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_result({g, m, n}, std::move(out), "bmm", {a, b},
                             [an, bn, g, m, k, n](detail::Node& o) {
    double* ga = detail::grad_of(an);
    double* gb = detail::grad_of(bn);
    for (std::size_t s = 0; s < g; ++s) {
      const double* G = o.grad.data() + s * m * n;
      const double* A = an->data.data() + s * m * k;
      const double* B = bn->data.data() + s * k * n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          if (ga) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
            ga[s * m * k + i * k + p] += acc;
          }
          if (gb) {
            const double av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[s * k * n + p * n + j] += av * G[i * n + j];
          }
        }
    }
  });
}

/// Batched a[g, m, k] · b[g, n, k]ᵀ, the attention-score product.
inline Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 3, "bmm_nt");
  detail::require_rank(b, 3, "bmm_nt");
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  if (b.dim(0) != g || b.dim(2) != k) {
    throw ShapeError("bmm_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(g * m * n);
  for (std::size_t s = 0; s < g; ++s) {
    const double* A = a.data().data() + s * m * k;
    const double* B = b.data().data() + s * n * k;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
        out[s * m * n + i * n + j] = acc;
      }
  }
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_result({g, m, n}, std::move(out), "bmm_nt", {a, b},
                             [an, bn, g, m, k, n](detail::Node& o) {
    double* ga = detail::grad_of(an);
    double* gb = detail::grad_of(bn);
    for (std::size_t s = 0; s < g; ++s) {
      const double* G = o.grad.data() + s * m * n;
      const double* A = an->data.data() + s * m * k;
      const double* B = bn->data.data() + s * n * k;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = G[i * n + j];
          if (gv == 0.0) continue;
          if (ga)
            for (std::size_t p = 0; p < k; ++p) ga[s * m * k + i * k + p] += gv * B[j * k + p];
          if (gb)
            for (std::size_t p = 0; p < k; ++p) gb[s * n * k + j * k + p] += gv * A[i * k + p];
        }
    }
  });
}

/// [B, n, H·dh] -> [B·H, n, dh]
inline Tensor split_heads(const Tensor& x, std::size_t heads) {
  detail::require_rank(x, 3, "split_heads");
  const std::size_t B = x.dim(0), n = x.dim(1), d = x.dim(2);
  if (heads == 0 || d % heads != 0) throw ShapeError("split_heads: width not divisible by heads");
  const std::size_t dh = d / heads;
  std::vector<double> out(x.size());
  auto index = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t j) {
    return std::pair{((b * heads + h) * n + t) * dh + j, (b * n + t) * d + h * dh + j};
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < dh; ++j) {
          auto [dst, src] = index(b, h, t, j);
          out[dst] = x[src];
        }
  auto* xn = x.node().get();
  return detail::make_result({B * heads, n, dh}, std::move(out), "split_heads", {x},
                             [xn, index, B, heads, n, dh](detail::Node& o) {
    double* gx = detail::grad_of(xn);
    if (!gx) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t j = 0; j < dh; ++j) {
            auto [dst, src] = index(b, h, t, j);
            gx[src] += o.grad[dst];
          }
  });
}

/// [B·H, n, dh] -> [B, n, H·dh]
inline Tensor merge_heads(const Tensor& x, std::size_t heads) {
  detail::require_rank(x, 3, "merge_heads");
  if (heads == 0 || x.dim(0) % heads != 0) throw ShapeError("merge_heads: bad head count");
  const std::size_t B = x.dim(0) / heads, n = x.dim(1), dh = x.dim(2), d = dh * heads;
  std::vector<double> out(x.size());
  auto index = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t j) {
    return std::pair{(b * n + t) * d + h * dh + j, ((b * heads + h) * n + t) * dh + j};
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < dh; ++j) {
          auto [dst, src] = index(b, h, t, j);
          out[dst] = x[src];
        }
  auto* xn = x.node().get();
  return detail::make_result({B, n, d}, std::move(out), "merge_heads", {x},
                             [xn, index, B, heads, n, dh](detail::Node& o) {
    double* gx = detail::grad_of(xn);
    if (!gx) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t j = 0; j < dh; ++j) {
            auto [dst, src] = index(b, h, t, j);
            gx[src] += o.grad[dst];
          }
  });
}

/// Normalizes over the last axis, then applies gain and shift.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = kLayerNormEpsilon) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: parameters do not match width " + std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gamma[j] + beta[j];
    }
  }
  auto* xn = x.node().get();
  auto* gn = gamma.node().get();
  auto* bn = beta.node().get();
  return detail::make_result(x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
                             [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std),
                              rows, d](detail::Node& o) {
    double* gx = detail::grad_of(xn);
    double* gg = detail::grad_of(gn);
    double* gb = detail::grad_of(bn);
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = o.grad.data() + r * d;
      const double* xh = xhat.data() + r * d;
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (gg) gg[j] += g[j] * xh[j];
        if (gb) gb[j] += g[j];
        dxhat[j] = g[j] * gn->data[j];
        sum_d += dxhat[j];
        sum_dx += dxhat[j] * xh[j];
      }
      if (!gx) continue;
      const double scale = inv_std[r] / static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j)
        gx[r * d + j] += scale * (static_cast<double>(d) * dxhat[j] - sum_d - xh[j] * sum_dx);
    }
  });
}

/// Gathers rows of `table[V, d]`; output shape is `prefix + [d]`.
inline Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids, Shape prefix) {
  detail::require_rank(table, 2, "embedding");
  const std::size_t V = table.dim(0), d = table.dim(1);
  if (shape_size(prefix) != ids.size()) throw ShapeError("embedding: ids do not fill prefix shape");
  std::vector<double> out(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= V) {
      throw IndexError("embedding: id " + std::to_string(ids[t]) + " outside table of " +
                       std::to_string(V) + " rows");
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[t] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  prefix.push_back(d);
  auto* tn = table.node().get();
  return detail::make_result(std::move(prefix), std::move(out), "embedding", {table},
                             [tn, ids, d](detail::Node& o) {
    double* gt = detail::grad_of(tn);
    if (!gt) return;
    for (std::size_t t = 0; t < ids.size(); ++t)
      for (std::size_t j = 0; j < d; ++j) gt[ids[t] * d + j] += o.grad[t * d + j];
  });
}

/// Inverted dropout. Identity (the same tensor) when not training or rate 0.
inline Tensor dropout(const Tensor& x, double rate, Rng* rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout rate must be < 1");
  if (!rng) throw ContractError("dropout in training mode needs a generator");
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (double& m : mask) m = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  auto* xn = x.node().get();
  return detail::make_result(x.shape(), std::move(out), "dropout", {x},
                             [xn, mask = std::move(mask)](detail::Node& o) {
    if (double* gx = detail::grad_of(xn))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * mask[i];
  });
}

/// Concatenates a[r, p] and b[r, q] into [r, p + q].
inline Tensor concat_columns(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "concat");
  detail::require_rank(b, 2, "concat");
  const std::size_t r = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != r) throw ShapeError("concat: row counts differ");
  std::vector<double> out(r * (p + q));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = a[i * p + j];
    for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = b[i * q + j];
  }
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_result({r, p + q}, std::move(out), "concat", {a, b},
                             [an, bn, r, p, q](detail::Node& o) {
    double* ga = detail::grad_of(an);
    double* gb = detail::grad_of(bn);
    for (std::size_t i = 0; i < r; ++i) {
      if (ga) for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += o.grad[i * (p + q) + j];
      if (gb) for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += o.grad[i * (p + q) + p + j];
    }
  });
}

/// x[B, n, d] -> x[:, pos, :] as [B, d].
inline Tensor select_position(const Tensor& x, std::size_t pos) {
  detail::require_rank(x, 3, "select_position");
  const std::size_t B = x.dim(0), n = x.dim(1), d = x.dim(2);
  if (pos >= n) throw IndexError("select_position: position out of range");
  std::vector<double> out(B * d);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] = x[(b * n + pos) * d + j];
  auto* xn = x.node().get();
  return detail::make_result({B, d}, std::move(out), "select_position", {x},
                             [xn, B, n, d, pos](detail::Node& o) {
    if (double* gx = detail::grad_of(xn))
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < d; ++j) gx[(b * n + pos) * d + j] += o.grad[b * d + j];
  });
}

/// x[r, k] -> column j as [r, 1].
inline Tensor column(const Tensor& x, std::size_t j) {
  detail::require_rank(x, 2, "column");
  const std::size_t r = x.dim(0), k = x.dim(1);
  if (j >= k) throw IndexError("column: index out of range");
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = x[i * k + j];
  auto* xn = x.node().get();
  return detail::make_result({r, 1}, std::move(out), "column", {x}, [xn, r, k, j](detail::Node& o) {
    if (double* gx = detail::grad_of(xn))
      for (std::size_t i = 0; i < r; ++i) gx[i * k + j] += o.grad[i];
  });
}

/// Multiplies each row of x[r, k] by the matching entry of s[r, 1].
inline Tensor scale_rows(const Tensor& x, const Tensor& s) {
  detail::require_rank(x, 2, "scale_rows");
  const std::size_t r = x.dim(0), k = x.dim(1);
  if (s.shape() != Shape{r, 1}) throw ShapeError("scale_rows: scale must be [rows, 1]");
  std::vector<double> out(r * k);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = x[i * k + j] * s[i];
  auto* xn = x.node().get();
  auto* sn = s.node().get();
  return detail::make_result({r, k}, std::move(out), "scale_rows", {x, s},
                             [xn, sn, r, k](detail::Node& o) {
    double* gx = detail::grad_of(xn);
    double* gs = detail::grad_of(sn);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        if (gx) gx[i * k + j] += o.grad[i * k + j] * sn->data[i];
        if (gs) gs[i] += o.grad[i * k + j] * xn->data[i * k + j];
      }
  });
}

/// Repeats column c of a[r, m] `sizes[c]` times: [r, m] -> [r, Σ sizes].
inline Tensor expand_blocks(const Tensor& a, const std::vector<std::size_t>& sizes) {
  detail::require_rank(a, 2, "expand_blocks");
  const std::size_t r = a.dim(0), m = a.dim(1);
  if (sizes.size() != m) throw ShapeError("expand_blocks: one block size per column required");
  std::vector<std::size_t> owner;
  for (std::size_t c = 0; c < m; ++c) owner.insert(owner.end(), sizes[c], c);
  const std::size_t w = owner.size();
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * m + owner[j]];
  auto* an = a.node().get();
  return detail::make_result({r, w}, std::move(out), "expand_blocks", {a},
                             [an, owner, r, m, w](detail::Node& o) {
    if (double* ga = detail::grad_of(an))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * m + owner[j]] += o.grad[i * w + j];
  });
}

/// p[r, k] -> [r, P] with entry (row, q) = p[row, i_q] + p[row, j_q].
inline Tensor pair_sums(const Tensor& p, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  detail::require_rank(p, 2, "pair_sums");
  const std::size_t r = p.dim(0), k = p.dim(1), P = pairs.size();
  if (P == 0) throw ShapeError("pair_sums: no pairs");
  for (auto [i, j] : pairs) {
    if (i >= k || j >= k) throw IndexError("pair_sums: index out of range");
  }
  std::vector<double> out(r * P);
  for (std::size_t row = 0; row < r; ++row)
    for (std::size_t q = 0; q < P; ++q)
      out[row * P + q] = p[row * k + pairs[q].first] + p[row * k + pairs[q].second];
  auto* pn = p.node().get();
  return detail::make_result({r, P}, std::move(out), "pair_sums", {p},
                             [pn, pairs, r, k, P](detail::Node& o) {
    double* gp = detail::grad_of(pn);
    if (!gp) return;
    for (std::size_t row = 0; row < r; ++row)
      for (std::size_t q = 0; q < P; ++q) {
        gp[row * k + pairs[q].first] += o.grad[row * P + q];
        gp[row * k + pairs[q].second] += o.grad[row * P + q];
      }
  });
}

}  // namespace cmhl
