#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "geosdg/error.hpp"
#include "geosdg/numerics/autodiff.hpp"

namespace geosdg::numerics {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

/// Scalar function of several tensors, expressed on a tape.
template <typename T>
using TapeFunction = std::function<ad::Var<T>(ad::Tape<T>&, std::span<const ad::Var<T>>)>;

namespace detail {

template <typename T>
T eval_scalar(const TapeFunction<T>& f, const std::vector<Tensor<T>>& inputs) {
  ad::Tape<T> tape;
  std::vector<ad::Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& x : inputs) vars.push_back(tape.constant(x));
  T y;
  try {
    y = f(tape, vars).value().item();
  } catch (const NumericalError& e) {
    throw InvalidValue(std::string("grad_check: function is non-finite: ") + e.what());
  }
  if (!std::isfinite(y)) throw InvalidValue("grad_check: function returned a non-finite value");
  return y;
}

}  // namespace detail

/// Compares tape gradients of f against central differences over every
/// coordinate of every input. Error per coordinate is
/// |analytic - numeric| / max(1, |analytic|); the maximum is returned.
/// max_coords > 0 checks at most that many evenly strided coordinates per
/// input (first and last always included).
template <typename T>
GradCheckResult grad_check(const TapeFunction<T>& f, std::vector<Tensor<T>> inputs, T eps, std::size_t max_coords = 0) {
  if (!(eps > T(0) && eps <= T(1e-2))) throw InvalidValue("grad_check: eps must lie in (0, 1e-2]");

  std::vector<Tensor<T>> analytic;
  {
    ad::Tape<T> tape;
    std::vector<ad::Var<T>> vars;
    for (const auto& x : inputs) vars.push_back(tape.leaf(x));
    ad::Var<T> y;
    try {
      y = f(tape, vars);
    } catch (const NumericalError& e) {
      throw InvalidValue(std::string("grad_check: function is non-finite: ") + e.what());
    }
    if (!std::isfinite(y.value().item())) throw InvalidValue("grad_check: function returned a non-finite value");
    tape.backward(y);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = inputs[k].size();
    std::vector<std::size_t> coords;
    if (max_coords == 0 || n <= max_coords) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else if (max_coords == 1) {
      coords.push_back(0);
    } else {
      for (std::size_t j = 0; j < max_coords; ++j) coords.push_back(j * (n - 1) / (max_coords - 1));
    }
    for (std::size_t i : coords) {
      const T orig = inputs[k][i];
      const T hi = orig + eps;
      const T lo = orig - eps;
      inputs[k][i] = hi;
      const T up = detail::eval_scalar(f, inputs);
      inputs[k][i] = lo;
      const T down = detail::eval_scalar(f, inputs);
      inputs[k][i] = orig;
      // divide by the representable step, not 2*eps
      const double numeric =
          (static_cast<double>(up) - static_cast<double>(down)) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err >= result.max_rel_error) result = {err, k, i, a, numeric};
    }
  }
  return result;
}

/// Single-input convenience form.
template <typename T>
GradCheckResult grad_check(const std::function<ad::Var<T>(ad::Tape<T>&, ad::Var<T>)>& f, const Tensor<T>& x, T eps) {
  TapeFunction<T> g = [&f](ad::Tape<T>& tape, std::span<const ad::Var<T>> v) { return f(tape, v[0]); };
  return grad_check<T>(g, std::vector<Tensor<T>>{x}, eps);
}

}  // namespace geosdg::numerics
