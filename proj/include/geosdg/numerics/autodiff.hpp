#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// Every op appends one node holding its forward value and a closure that
// propagates the node's gradient to its parents. Nodes are appended in
// evaluation order, so walking the tape backwards is a reverse topological
// order and each recorded op is visited at most once.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geosdg/error.hpp"
#include "geosdg/numerics/ops.hpp"
#include "geosdg/numerics/tensor.hpp"

namespace geosdg::ad {

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  Tape<T>* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  /// Receives the tape, the gradient flowing into the node's output, and the
  /// node's forward value.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr, "leaf"});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an op result. The closure is dropped when no parent needs a
  /// gradient. Non-finite outputs are rejected here, for every op.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()), std::move(backward));
  }

  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> parents, BackwardFn backward) {
    if (!value.all_finite()) throw NumericalError(std::string(op) + ": non-finite output");
    bool needs = false;
    for (const auto& p : parents) {
      if (p.tape() != this) throw InvalidValue(std::string(op) + ": operand from a different tape");
      needs = needs || nodes_[p.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : nullptr, op});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }

  /// Gradient of the last backward root w.r.t. v; zeros when v was not reached.
  Tensor<T> grad(Var<T> v) const {
    const auto& n = nodes_.at(v.id());
    if (n.grad.size() == 0) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  void accumulate(Var<T> v, const Tensor<T>& g) {
    auto& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (g.size() != n.value.size()) {
      throw ShapeError(std::string("gradient for ") + n.op + " has shape " + shape_str(g.shape()) + ", expected " +
                       shape_str(n.value.shape()));
    }
    if (n.grad.size() == 0) {
      n.grad = Tensor<T>(n.value.shape(), std::vector<T>(g.data().begin(), g.data().end()));
      return;
    }
    T* dst = n.grad.ptr();
    const T* src = g.ptr();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every node that requires a
  /// gradient. Root must hold a single value.
  void backward(Var<T> root) {
    if (root.tape() != this) throw InvalidValue("backward: root from a different tape");
    if (value(root).size() != 1) throw ShapeError("backward: root must be a scalar, got " + shape_str(value(root).shape()));
    for (auto& n : nodes_) n.grad = Tensor<T>();
    visits_ = 0;
    auto& r = nodes_[root.id()];
    if (!r.requires_grad) return;
    r.grad = Tensor<T>(r.value.shape(), T(1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      ++visits_;
      // grad is not touched by the node's own closure; parents have smaller ids.
      n.backward(*this, n.grad, n.value);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Number of op closures executed by the last backward call.
  std::size_t backward_visits() const noexcept { return visits_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    const char* op = "";
  };

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

// ---------------------------------------------------------------------------
// ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  return a.tape()->record("matmul", numerics::matmul(a.value(), b.value()), {a, b},
                          [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            if (t.requires_grad(a)) t.accumulate(a, numerics::matmul_nt(g, t.value(b)));
                            if (t.requires_grad(b)) t.accumulate(b, numerics::matmul_tn(t.value(a), g));
                          });
}

/// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  return a.tape()->record("matmul_nt", numerics::matmul_nt(a.value(), b.value()), {a, b},
                          [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            if (t.requires_grad(a)) t.accumulate(a, numerics::matmul(g, t.value(b)));
                            if (t.requires_grad(b)) t.accumulate(b, numerics::matmul_tn(g, t.value(a)));
                          });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) throw ShapeError("add: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  Tensor<T> y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.tape()->record("add", std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

/// x [m,n] + bias broadcast over rows; bias holds n values (any rank).
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  const auto& xv = x.value();
  const auto& bv = bias.value();
  const std::size_t n = xv.cols();
  if (bv.size() != n) throw ShapeError("add_bias: bias " + shape_str(bv.shape()) + " vs " + shape_str(xv.shape()));
  Tensor<T> y = xv;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i % n];
  return x.tape()->record("add_bias", std::move(y), {x, bias}, [x, bias, n](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) {
      Tensor<T> gb(t.value(bias).shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      t.accumulate(bias, gb);
    }
  });
}

/// x W + b for x [m,k], W [k,n], b [n].
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  return add_bias(matmul(x, w), b);
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
  Tensor<T> y = x.value();
  for (auto& v : y.data()) v *= s;
  return x.tape()->record("scale", std::move(y), {x}, [x, s](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
    Tensor<T> gx = g;
    for (auto& v : gx.data()) v *= s;
    t.accumulate(x, gx);
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  Tensor<T> y = x.value();
  for (auto& v : y.data()) v = numerics::gelu(v);
  return x.tape()->record("gelu", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
    const auto& xv = t.value(x);
    Tensor<T> gx(xv.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * numerics::gelu_grad(xv[i]);
    t.accumulate(x, gx);
  });
}

/// Row-wise layer norm over the last axis.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const auto& xv = x.value();
  const std::size_t n = xv.cols();
  const std::size_t rows = xv.size() / n;
  Tensor<T> y = numerics::layer_norm(xv, gain.value(), bias.value(), eps);
  return x.tape()->record(
      "layer_norm", std::move(y), {x, gain, bias}, [x, gain, bias, n, rows, eps](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        const auto& xv = t.value(x);
        const auto& gv = t.value(gain);
        Tensor<T> gx(xv.shape());
        Tensor<T> ggain(gv.shape());
        Tensor<T> gbias(t.value(bias).shape());
        std::vector<T> xhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* xr = xv.ptr() + r * n;
          const T* gr = g.ptr() + r * n;
          T mean = 0;
          for (std::size_t j = 0; j < n; ++j) mean += xr[j];
          mean /= static_cast<T>(n);
          T var = 0;
          for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
          var /= static_cast<T>(n);
          const T inv = T(1) / std::sqrt(var + eps);
          T sum_d = 0, sum_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (xr[j] - mean) * inv;
            const T d = gr[j] * gv[j];
            sum_d += d;
            sum_dx += d * xhat[j];
            ggain[j] += gr[j] * xhat[j];
            gbias[j] += gr[j];
          }
          T* out = gx.ptr() + r * n;
          const T nn = static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const T d = gr[j] * gv[j];
            out[j] = inv / nn * (nn * d - sum_d - xhat[j] * sum_dx);
          }
        }
        t.accumulate(x, gx);
        t.accumulate(gain, ggain);
        t.accumulate(bias, gbias);
      });
}

/// Softmax over the last axis.
template <typename T>
Var<T> softmax(Var<T> x) {
  Tensor<T> y = numerics::softmax(x.value());
  return x.tape()->record("softmax", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
    const std::size_t n = y.cols();
    Tensor<T> gx(y.shape());
    for (std::size_t r = 0; r < y.size() / n; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] = y[r * n + j] * (g[r * n + j] - dot);
    }
    t.accumulate(x, gx);
  });
}

/// Fused log-softmax over the last axis (max-subtraction + log-sum-exp).
template <typename T>
Var<T> log_softmax(Var<T> x) {
  Tensor<T> y = numerics::log_softmax(x.value());
  return x.tape()->record("log_softmax", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& logp) {
    const std::size_t n = logp.cols();
    Tensor<T> p = logp;
    for (auto& v : p.data()) v = std::exp(v);
    Tensor<T> gx(p.shape());
    for (std::size_t r = 0; r < p.size() / n; ++r) {
      T sum = 0;
      for (std::size_t j = 0; j < n; ++j) sum += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] = g[r * n + j] - p[r * n + j] * sum;
    }
    t.accumulate(x, gx);
  });
}

/// -sum q * log_p as a scalar. q must be a distribution.
template <typename T>
Var<T> cross_entropy(Var<T> q, Var<T> log_p) {
  const T loss = numerics::cross_entropy(q.value(), log_p.value());
  return q.tape()->record("cross_entropy", Tensor<T>::scalar(loss), {q, log_p},
                          [q, log_p](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            const T s = g[0];
                            const auto& qv = t.value(q);
                            const auto& lv = t.value(log_p);
                            if (t.requires_grad(log_p)) {
                              Tensor<T> gl(lv.shape());
                              for (std::size_t i = 0; i < gl.size(); ++i) gl[i] = -qv[i] * s;
                              t.accumulate(log_p, gl);
                            }
                            if (t.requires_grad(q)) {
                              Tensor<T> gq(qv.shape());
                              for (std::size_t i = 0; i < gq.size(); ++i) gq[i] = -lv[i] * s;
                              t.accumulate(q, gq);
                            }
                          });
}

/// Copy of x that blocks gradient flow.
template <typename T>
Var<T> detach(Var<T> x) {
  return x.tape()->constant(x.value());
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  return x.tape()->record("sum", Tensor<T>::scalar(acc), {x}, [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g[0]));
  });
}

/// Mean over rows of a [m,n] tensor -> [1,n].
template <typename T>
Var<T> mean_rows(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (m == 0) throw ShapeError("mean_rows: empty input");
  Tensor<T> y(Shape{1, n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) y[j] += xv[r * n + j];
  for (auto& v : y.data()) v /= static_cast<T>(m);
  return x.tape()->record("mean_rows", std::move(y), {x}, [x, m, n](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
    Tensor<T> gx(t.value(x).shape());
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] = g[j] / static_cast<T>(m);
    t.accumulate(x, gx);
  });
}

/// Rows [start, start+count) of a rank-2 tensor.
template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t start, std::size_t count) {
  const auto& xv = x.value();
  const std::size_t n = xv.cols();
  if (start + count > xv.rows()) throw ShapeError("slice_rows: out of range for " + shape_str(xv.shape()));
  std::vector<T> d(xv.data().begin() + start * n, xv.data().begin() + (start + count) * n);
  return x.tape()->record("slice_rows", Tensor<T>(Shape{count, n}, std::move(d)), {x},
                          [x, start, n](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            Tensor<T> gx(t.value(x).shape());
                            std::copy(g.data().begin(), g.data().end(), gx.data().begin() + start * n);
                            t.accumulate(x, gx);
                          });
}

/// Columns [start, start+width) of a rank-2 tensor.
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t width) {
  const auto& xv = x.value();
  numerics::require_rank2(xv, "slice_cols");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (start + width > n) throw ShapeError("slice_cols: out of range for " + shape_str(xv.shape()));
  Tensor<T> y(Shape{m, width});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < width; ++j) y[r * width + j] = xv[r * n + start + j];
  return x.tape()->record("slice_cols", std::move(y), {x}, [x, start, width, m, n](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
    Tensor<T> gx(Shape{m, n});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < width; ++j) gx[r * n + start + j] = g[r * width + j];
    t.accumulate(x, gx);
  });
}

/// Horizontal concatenation of rank-2 tensors with equal row counts.
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != m) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.value().cols());
    n += widths.back();
  }
  Tensor<T> y(Shape{m, n});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) y[r * n + off + j] = pv[r * widths[k] + j];
    off += widths[k];
  }
  std::vector<Var<T>> saved(parts.begin(), parts.end());
  return parts[0].tape()->record("concat_cols", std::move(y), parts,
                                 [saved, widths, m, n](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                                   std::size_t off = 0;
                                   for (std::size_t k = 0; k < saved.size(); ++k) {
                                     if (t.requires_grad(saved[k])) {
                                       Tensor<T> gk(Shape{m, widths[k]});
                                       for (std::size_t r = 0; r < m; ++r)
                                         for (std::size_t j = 0; j < widths[k]; ++j)
                                           gk[r * widths[k] + j] = g[r * n + off + j];
                                       t.accumulate(saved[k], gk);
                                     }
                                     off += widths[k];
                                   }
                                 });
}

/// Vertical concatenation [a; b] of rank-2 tensors with equal column counts.
template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column mismatch");
  const std::size_t n = av.cols(), ma = av.size() / n, mb = bv.size() / n;
  std::vector<T> d(av.data().begin(), av.data().end());
  d.insert(d.end(), bv.data().begin(), bv.data().end());
  return a.tape()->record("concat_rows", Tensor<T>(Shape{ma + mb, n}, std::move(d)), {a, b},
                          [a, b, ma, mb, n](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            if (t.requires_grad(a)) {
                              t.accumulate(a, Tensor<T>(t.value(a).shape(),
                                                        std::vector<T>(g.data().begin(), g.data().begin() + ma * n)));
                            }
                            if (t.requires_grad(b)) {
                              t.accumulate(b, Tensor<T>(t.value(b).shape(),
                                                        std::vector<T>(g.data().begin() + ma * n, g.data().end())));
                            }
                            (void)mb;
                          });
}

/// Row-wise x / max(||x||, eps).
template <typename T>
Var<T> l2_normalize_rows(Var<T> x, T eps = T(1e-12)) {
  const auto& xv = x.value();
  const std::size_t n = xv.cols(), m = xv.size() / n;
  Tensor<T> y(xv.shape());
  std::vector<T> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    T ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[r * n + j] * xv[r * n + j];
    norms[r] = std::max(std::sqrt(ss), eps);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xv[r * n + j] / norms[r];
  }
  return x.tape()->record("l2_normalize_rows", std::move(y), {x},
                          [x, norms, n, m, eps](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& saved) {
                            Tensor<T> gx(saved.shape());
                            for (std::size_t r = 0; r < m; ++r) {
                              if (norms[r] <= eps) {
                                for (std::size_t j = 0; j < n; ++j) gx[r * n + j] = g[r * n + j] / eps;
                                continue;
                              }
                              T dot = 0;
                              for (std::size_t j = 0; j < n; ++j) dot += saved[r * n + j] * g[r * n + j];
                              for (std::size_t j = 0; j < n; ++j)
                                gx[r * n + j] = (g[r * n + j] - saved[r * n + j] * dot) / norms[r];
                            }
                            t.accumulate(x, gx);
                          });
}

/// Column-wise x / max(||x||, eps) for a rank-2 x.
template <typename T>
Var<T> l2_normalize_cols(Var<T> x, T eps = T(1e-12)) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("l2_normalize_cols: expected rank 2, got " + shape_str(xv.shape()));
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  std::vector<T> norms(n, T(0));
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) norms[j] += xv[r * n + j] * xv[r * n + j];
  for (auto& v : norms) v = std::max(std::sqrt(v), eps);
  Tensor<T> y(xv.shape());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xv[r * n + j] / norms[j];
  return x.tape()->record("l2_normalize_cols", std::move(y), {x},
                          [x, norms, n, m, eps](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& saved) {
                            std::vector<T> dot(n, T(0));
                            for (std::size_t r = 0; r < m; ++r)
                              for (std::size_t j = 0; j < n; ++j) dot[j] += saved[r * n + j] * g[r * n + j];
                            Tensor<T> gx(saved.shape());
                            for (std::size_t r = 0; r < m; ++r)
                              for (std::size_t j = 0; j < n; ++j) {
                                gx[r * n + j] = norms[j] <= eps ? g[r * n + j] / eps
                                                                : (g[r * n + j] - saved[r * n + j] * dot[j]) / norms[j];
                              }
                            t.accumulate(x, gx);
                          });
}

/// Scaled dot-product attention for one head: weights = softmax(Q K^T / sqrt(d_k)),
/// output = weights V. The weights node is returned so callers can read the maps.
template <typename T>
struct AttentionVars {
  Var<T> output;
  Var<T> weights;
};

template <typename T>
AttentionVars<T> attention(Var<T> q, Var<T> k, Var<T> v) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 || qv.shape() != kv.shape() || vv.rows() != kv.rows()) {
    throw ShapeError("attention: Q " + shape_str(qv.shape()) + ", K " + shape_str(kv.shape()) + ", V " +
                     shape_str(vv.shape()));
  }
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(qv.cols()));
  auto scores = scale(matmul_nt(q, k), inv_sqrt_dk);
  auto weights = softmax(scores);
  return {matmul(weights, v), weights};
}

}  // namespace geosdg::ad
