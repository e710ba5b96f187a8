#pragma once

// Plain (non-recording) tensor kernels. The autodiff layer reuses these for
// its forward passes and for the transpose products in backward.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>

#include "geosdg/error.hpp"
#include "geosdg/numerics/tensor.hpp"

namespace geosdg::numerics {

template <typename T>
void require_finite(const Tensor<T>& x, const char* what) {
  if (!x.all_finite()) throw InvalidValue(std::string(what) + ": non-finite input");
}

template <typename T>
void require_rank2(const Tensor<T>& x, const char* what) {
  if (x.rank() != 2) throw ShapeError(std::string(what) + ": expected rank-2 tensor, got " + shape_str(x.shape()));
}

/// C = A * B for A [m,k], B [k,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<T> c(Shape{m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* pc = c.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = pa[i * k + p];
      const T* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

/// C = A * B^T for A [m,k], B [n,k].
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  Tensor<T> c(Shape{m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* pc = c.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = pb + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      pc[i * n + j] = acc;
    }
  }
  return c;
}

/// C = A^T * B for A [k,m], B [k,n].
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul_tn: " + shape_str(a.shape()) + "^T x " + shape_str(b.shape()));
  Tensor<T> c(Shape{m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* pc = c.ptr();
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = pa + p * m;
    const T* bp = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T api = ap[i];
      T* ci = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

namespace detail {

struct AxisLayout {
  std::size_t outer, extent, inner;
};

template <typename T>
AxisLayout axis_layout(const Tensor<T>& x, std::size_t axis, const char* what) {
  if (axis >= x.rank()) {
    throw ShapeError(std::string(what) + ": axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(x.shape()));
  }
  AxisLayout l{1, x.dim(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) l.inner *= x.dim(i);
  return l;
}

// Shared body of softmax / log_softmax: max-subtraction then log-sum-exp.
template <typename T, bool Log>
Tensor<T> softmax_impl(const Tensor<T>& x, std::size_t axis, const char* what) {
  const auto l = axis_layout(x, axis, what);
  require_finite(x, what);
  Tensor<T> y(x.shape());
  const T* px = x.ptr();
  T* py = y.ptr();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.extent * l.inner + in;
      T mx = px[base];
      for (std::size_t e = 1; e < l.extent; ++e) mx = std::max(mx, px[base + e * l.inner]);
      T sum = 0;
      for (std::size_t e = 0; e < l.extent; ++e) sum += std::exp(px[base + e * l.inner] - mx);
      if constexpr (Log) {
        const T lse = std::log(sum);
        for (std::size_t e = 0; e < l.extent; ++e) py[base + e * l.inner] = px[base + e * l.inner] - mx - lse;
      } else {
        for (std::size_t e = 0; e < l.extent; ++e) py[base + e * l.inner] = std::exp(px[base + e * l.inner] - mx) / sum;
      }
    }
  }
  return y;
}

}  // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  return detail::softmax_impl<T, false>(x, axis, "softmax");
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  return detail::softmax_impl<T, true>(x, axis, "log_softmax");
}

/// Softmax over the last axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  return softmax(x, x.rank() == 0 ? 0 : x.rank() - 1);
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  return log_softmax(x, x.rank() == 0 ? 0 : x.rank() - 1);
}

/// Checks that q is a probability vector: non-negative, summing to 1 within
/// tol, widened to the rounding a length-n sum in T can accumulate.
template <typename T>
void require_distribution(const Tensor<T>& q, const char* what, double tol = 1e-6) {
  tol = std::max(tol, 4.0 * static_cast<double>(q.size()) * std::numeric_limits<T>::epsilon());
  double sum = 0;
  for (T v : q.data()) {
    if (!std::isfinite(v) || v < 0) throw InvalidValue(std::string(what) + ": q has a negative or non-finite entry");
    sum += static_cast<double>(v);
  }
  if (std::abs(sum - 1.0) > tol) {
    throw InvalidValue(std::string(what) + ": q sums to " + std::to_string(sum) + ", not 1");
  }
}

/// -sum_i q_i * log_p_i. Zero-mass entries of q contribute nothing even when
/// log_p is -inf there.
template <typename T>
T cross_entropy(const Tensor<T>& q, const Tensor<T>& log_p) {
  if (q.shape() != log_p.shape()) {
    throw ShapeError("cross_entropy: " + shape_str(q.shape()) + " vs " + shape_str(log_p.shape()));
  }
  require_distribution(q, "cross_entropy");
  T acc = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] != T(0)) acc -= q[i] * log_p[i];
  }
  return acc;
}

template <typename T>
T entropy(const Tensor<T>& q) {
  T acc = 0;
  for (T v : q.data())
    if (v > T(0)) acc -= v * std::log(v);
  return acc;
}

/// Row-wise layer normalization over the last axis with population variance.
/// A zero-variance row normalizes to zeros, so the output equals `bias`.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                     " do not match last axis of " + shape_str(x.shape()));
  }
  if (!(eps > T(0))) throw InvalidValue("layer_norm: eps must be positive");
  Tensor<T> y(x.shape());
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * n;
    T* yr = y.ptr() + r * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(n);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * inv * gain[j] + bias[j];
  }
  return y;
}

/// Exact (erf) GELU and its derivative.
template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

}  // namespace geosdg::numerics
