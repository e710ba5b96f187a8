#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "geosdg/error.hpp"
#include "geosdg/numerics/autodiff.hpp"
#include "geosdg/numerics/ops.hpp"

namespace geosdg::dino {

/// Loss plus the distillation distributions it was built from.
template <typename T>
struct DinoLoss {
  ad::Var<T> loss;
  std::vector<Tensor<T>> q;      ///< per teacher (global) view, [1, N]
  std::vector<Tensor<T>> log_p;  ///< per student view, [1, N]
  std::size_t pairs = 0;
};

/// softmax((logits - c) / tau) per row.
template <typename T>
Tensor<T> teacher_probs(const Tensor<T>& logits, const Tensor<T>& center, double tau) {
  if (!(tau > 0)) throw ConfigError("teacher temperature must be positive, got " + std::to_string(tau));
  const std::size_t n = logits.cols();
  if (center.size() != n) {
    throw ShapeError("center has " + std::to_string(center.size()) + " entries, logits have " + std::to_string(n));
  }
  Tensor<T> z = logits;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - center[i % n]) / static_cast<T>(tau);
  return numerics::softmax(z);
}

/// Mean KL(q || uniform) = log N - H(q) over the rows of q.
template <typename T>
double collapse_metric(const Tensor<T>& q) {
  const std::size_t n = q.cols(), rows = q.size() / n;
  if (rows == 0) throw InvalidValue("collapse_metric: no rows");
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    double h = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = static_cast<double>(q[r * n + j]);
      if (p > 0) h -= p * std::log(p);
    }
    total += std::log(static_cast<double>(n)) - h;
  }
  return total / static_cast<double>(rows);
}

/// Self-distillation loss. Student views are indexed globals first, so teacher
/// view i and student view i see the same crop and that pair is skipped.
/// Teacher logits are read by value only; no gradient reaches them.
template <typename T>
DinoLoss<T> dino_loss(std::span<const ad::Var<T>> student, std::span<const ad::Var<T>> teacher,
                      const Tensor<T>& center, double tau_s, double tau_t) {
  if (!(tau_s > 0)) throw ConfigError("student temperature must be positive, got " + std::to_string(tau_s));
  if (!(tau_t > 0)) throw ConfigError("teacher temperature must be positive, got " + std::to_string(tau_t));
  if (teacher.empty() || student.empty()) throw InvalidValue("dino_loss: no views");
  if (teacher.size() > student.size()) throw ShapeError("dino_loss: more teacher views than student views");
  auto& tape = *student.front().tape();

  DinoLoss<T> out;
  std::vector<ad::Var<T>> q, log_p;
  for (const auto& t : teacher) {
    auto probs = teacher_probs(t.value(), center, tau_t);
    out.q.push_back(probs);
    q.push_back(tape.constant(std::move(probs)));
  }
  for (const auto& s : student) {
    if (s.shape() != teacher.front().shape()) {
      throw ShapeError("dino_loss: student logits " + shape_str(s.shape()) + " vs teacher " +
                       shape_str(teacher.front().shape()));
    }
    log_p.push_back(ad::log_softmax(ad::scale(s, static_cast<T>(1.0 / tau_s))));
    out.log_p.push_back(log_p.back().value());
  }

  ad::Var<T> total;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < log_p.size(); ++j) {
      if (i == j) continue;
      auto ce = ad::cross_entropy(q[i], log_p[j]);
      total = out.pairs == 0 ? ce : ad::add(total, ce);
      ++out.pairs;
    }
  if (out.pairs == 0) throw InvalidValue("dino_loss: no teacher/student pairs with distinct views");
  out.loss = ad::scale(total, static_cast<T>(1.0 / static_cast<double>(out.pairs)));
  return out;
}

}  // namespace geosdg::dino
