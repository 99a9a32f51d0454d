#pragma once

// Define-by-run reverse-mode differentiation. Every op records its output
// value and a closure that pushes the output gradient to its parents; the
// tape is replayed backwards from a scalar loss.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cops/error.hpp"
#include "cops/rng.hpp"
#include "cops/tensor.hpp"

namespace cops::ad {

struct Var {
  std::uint32_t id = 0;
};

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

template <typename S>
MatMap<S> mat(Tensor<S>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap<S>(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename S>
ConstMatMap<S> mat(const Tensor<S>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap<S>(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var)>;

#ifdef NDEBUG
  static constexpr bool kCheckFiniteDefault = false;
#else
  static constexpr bool kCheckFiniteDefault = true;
#endif

  explicit Tape(bool check_finite = kCheckFiniteDefault) : check_finite_(check_finite) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<S> t) {
    Node n;
    n.value = std::move(t);
    return push(std::move(n));
  }

  /// Leaf that receives a gradient but is not bound to a Parameter.
  Var input(Tensor<S> t) {
    Node n;
    n.value = std::move(t);
    n.needs_grad = true;
    return push(std::move(n));
  }

  /// Leaf that reads `p.value` in place and adds into `p.grad` on backward.
  Var parameter(Parameter<S>& p) {
    Node n;
    n.external = &p.value;
    n.param = &p;
    n.needs_grad = true;
    return push(std::move(n));
  }

  /// Read-only parameter leaf (inference on a frozen model).
  Var frozen(const Parameter<S>& p) {
    Node n;
    n.external = &p.value;
    return push(std::move(n));
  }

  Var record(Tensor<S> value, std::initializer_list<Var> parents, BackwardFn fn) {
    if (check_finite_) check_finite(value, "tape op");
    Node n;
    n.value = std::move(value);
    for (Var p : parents) n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
    if (n.needs_grad) n.back = std::move(fn);
    return push(std::move(n));
  }

  const Tensor<S>& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  Tensor<S>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (!n.grad_ready) {
      const Tensor<S>& val = n.external ? *n.external : n.value;
      if (n.grad.shape() != val.shape()) n.grad = Tensor<S>(val.shape());
      else n.grad.zero();
      n.grad_ready = true;
    }
    return n.grad;
  }

  bool has_grad(Var v) const { return nodes_[v.id].grad_ready; }

  std::size_t size() const { return nodes_.size(); }

  /// Populates gradients of every node reachable from `loss` and adds the
  /// parameter-leaf gradients into their Parameter::grad (accumulating, so
  /// two calls without zeroing double them).
  void backward(Var loss) {
    require(value(loss).size() == 1, ErrorCode::NonScalarLoss,
            "backward needs a scalar loss, got shape " + shape_string(value(loss).shape()));
    for (auto& n : nodes_) n.grad_ready = false;
    grad(loss)[0] = S(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.grad_ready) continue;
      if (n.back) n.back(*this, Var{static_cast<std::uint32_t>(i)});
      if (n.param) {
        Node& again = nodes_[i];
        auto& pg = again.param->grad;
        if (pg.shape() != again.grad.shape()) pg = Tensor<S>(again.grad.shape());
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += again.grad[k];
      }
    }
  }

 private:
  struct Node {
    Tensor<S> value;
    const Tensor<S>* external = nullptr;
    Parameter<S>* param = nullptr;
    Tensor<S> grad;
    bool needs_grad = false;
    bool grad_ready = false;
    BackwardFn back;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool check_finite_;
};

namespace detail {

template <typename S>
void accumulate(Tensor<S>& into, const Tensor<S>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

inline void same_shape_or_throw(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorCode::ShapeMismatch,
          std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
}

template <typename S, typename F, typename DF>
Var unary(Tape<S>& t, Var a, F f, DF df) {
  const Tensor<S>& x = t.value(a);
  Tensor<S> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(std::move(y), {a}, [a, df](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    const Tensor<S>& x = t.value(a);
    const Tensor<S>& y = t.value(self);
    Tensor<S>& gx = t.grad(a);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

/// a[..., K] x w[K, N] -> [..., N]
template <typename S>
Var matmul(Tape<S>& t, Var a, Var w) {
  const Tensor<S>& x = t.value(a);
  const Tensor<S>& m = t.value(w);
  require(m.rank() == 2 && x.cols() == m.dim(0), ErrorCode::ShapeMismatch,
          "matmul: " + shape_string(x.shape()) + " x " + shape_string(m.shape()));
  const std::size_t rows = x.rows(), k = m.dim(0), n = m.dim(1);
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor<S> y(out_shape);
  mat(y, rows, n).noalias() = mat(x, rows, k) * mat(m, k, n);
  return t.record(std::move(y), {a, w}, [a, w, rows, k, n](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    if (t.needs_grad(a)) mat(t.grad(a), rows, k).noalias() += mat(gy, rows, n) * mat(t.value(w), k, n).transpose();
    if (t.needs_grad(w)) mat(t.grad(w), k, n).noalias() += mat(t.value(a), rows, k).transpose() * mat(gy, rows, n);
  });
}

/// a[..., N] + b[N]
template <typename S>
Var add_bias(Tape<S>& t, Var a, Var b) {
  const Tensor<S>& x = t.value(a);
  const Tensor<S>& bias = t.value(b);
  require(bias.size() == x.cols(), ErrorCode::ShapeMismatch,
          "add_bias: " + shape_string(x.shape()) + " + " + shape_string(bias.shape()));
  Tensor<S> y = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] += bias[c];
  }
  return t.record(std::move(y), {a, b}, [a, b, n](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    if (t.needs_grad(a)) detail::accumulate(t.grad(a), gy);
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.grad(b);
      for (std::size_t r = 0; r < gy.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) gb[c] += gy[r * n + c];
      }
    }
  });
}

template <typename S>
Var add(Tape<S>& t, Var a, Var b) {
  detail::same_shape_or_throw(t.value(a).shape(), t.value(b).shape(), "add");
  Tensor<S> y = t.value(a);
  detail::accumulate(y, t.value(b));
  return t.record(std::move(y), {a, b}, [a, b](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    if (t.needs_grad(a)) detail::accumulate(t.grad(a), gy);
    if (t.needs_grad(b)) detail::accumulate(t.grad(b), gy);
  });
}

template <typename S>
Var sub(Tape<S>& t, Var a, Var b) {
  detail::same_shape_or_throw(t.value(a).shape(), t.value(b).shape(), "sub");
  Tensor<S> y = t.value(a);
  const Tensor<S>& x2 = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= x2[i];
  return t.record(std::move(y), {a, b}, [a, b](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    if (t.needs_grad(a)) detail::accumulate(t.grad(a), gy);
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
    }
  });
}

template <typename S>
Var mul(Tape<S>& t, Var a, Var b) {
  detail::same_shape_or_throw(t.value(a).shape(), t.value(b).shape(), "mul");
  Tensor<S> y = t.value(a);
  const Tensor<S>& x2 = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= x2[i];
  return t.record(std::move(y), {a, b}, [a, b](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor<S>& ga = t.grad(a);
      const Tensor<S>& xb = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * xb[i];
    }
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.grad(b);
      const Tensor<S>& xa = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * xa[i];
    }
  });
}

template <typename S>
Var scale(Tape<S>& t, Var a, S s) {
  return detail::unary(t, a, [s](S x) { return s * x; }, [s](S, S) { return s; });
}

template <typename S>
Var add_scalar(Tape<S>& t, Var a, S s) {
  return detail::unary(t, a, [s](S x) { return x + s; }, [](S, S) { return S(1); });
}

template <typename S>
Var tanh(Tape<S>& t, Var a) {
  return detail::unary(t, a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var sigmoid(Tape<S>& t, Var a) {
  return detail::unary(
      t, a, [](S x) { return S(1) / (S(1) + std::exp(-x)); }, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var relu(Tape<S>& t, Var a) {
  return detail::unary(
      t, a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Var exp(Tape<S>& t, Var a) {
  return detail::unary(t, a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Var square(Tape<S>& t, Var a) {
  return detail::unary(t, a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

/// Elementwise product with a constant tensor (no gradient to the constant).
template <typename S>
Var mul_const(Tape<S>& t, Var a, std::shared_ptr<const Tensor<S>> c) {
  detail::same_shape_or_throw(t.value(a).shape(), c->shape(), "mul_const");
  Tensor<S> y = t.value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*c)[i];
  return t.record(std::move(y), {a}, [a, c](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    Tensor<S>& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * (*c)[i];
  });
}

template <typename S>
Var sum(Tape<S>& t, Var a) {
  const Tensor<S>& x = t.value(a);
  S total = 0;
  for (S v : x.values()) total += v;
  return t.record(Tensor<S>({1}, std::vector<S>{total}), {a}, [a](Tape<S>& t, Var self) {
    const S g = t.grad(self)[0];
    Tensor<S>& ga = t.grad(a);
    for (auto& v : ga.values()) v += g;
  });
}

template <typename S>
Var mean(Tape<S>& t, Var a) {
  const std::size_t n = t.value(a).size();
  require(n > 0, ErrorCode::ShapeMismatch, "mean of empty tensor");
  return scale(t, sum(t, a), S(1) / static_cast<S>(n));
}

/// Sum over the last axis: [..., N] -> [...]
template <typename S>
Var row_sum(Tape<S>& t, Var a) {
  const Tensor<S>& x = t.value(a);
  const std::size_t rows = x.rows(), n = x.cols();
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape = {1};
  Tensor<S> y(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    S s = 0;
    for (std::size_t c = 0; c < n; ++c) s += x[r * n + c];
    y[r] = s;
  }
  return t.record(std::move(y), {a}, [a, rows, n](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    Tensor<S>& ga = t.grad(a);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += gy[r];
    }
  });
}

/// Concatenation along the last axis.
template <typename S>
Var concat_last(Tape<S>& t, Var a, Var b) {
  const Tensor<S>& x = t.value(a);
  const Tensor<S>& z = t.value(b);
  require(x.rows() == z.rows() && x.rank() == z.rank(), ErrorCode::ShapeMismatch,
          "concat_last: " + shape_string(x.shape()) + " | " + shape_string(z.shape()));
  const std::size_t rows = x.rows(), n1 = x.cols(), n2 = z.cols();
  Shape shape = x.shape();
  shape.back() = n1 + n2;
  Tensor<S> y(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data() + r * n1, n1, y.data() + r * (n1 + n2));
    std::copy_n(z.data() + r * n2, n2, y.data() + r * (n1 + n2) + n1);
  }
  return t.record(std::move(y), {a, b}, [a, b, rows, n1, n2](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor<S>& ga = t.grad(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n1; ++c) ga[r * n1 + c] += gy[r * (n1 + n2) + c];
      }
    }
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.grad(b);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n2; ++c) gb[r * n2 + c] += gy[r * (n1 + n2) + n1 + c];
      }
    }
  });
}

/// Concatenation along the leading (time) axis: [T1,B,D] || [T2,B,D].
template <typename S>
Var concat_time(Tape<S>& t, Var a, Var b) {
  const Tensor<S>& x = t.value(a);
  const Tensor<S>& z = t.value(b);
  require(x.rank() == 3 && z.rank() == 3 && x.dim(1) == z.dim(1) && x.dim(2) == z.dim(2),
          ErrorCode::ShapeMismatch, "concat_time: " + shape_string(x.shape()) + " || " + shape_string(z.shape()));
  Tensor<S> y({x.dim(0) + z.dim(0), x.dim(1), x.dim(2)});
  std::copy(x.values().begin(), x.values().end(), y.data());
  std::copy(z.values().begin(), z.values().end(), y.data() + x.size());
  const std::size_t n1 = x.size();
  return t.record(std::move(y), {a, b}, [a, b, n1](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor<S>& ga = t.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    }
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[n1 + i];
    }
  });
}

/// [B,K] -> [T,B,K], the same vector at every step.
template <typename S>
Var repeat_time(Tape<S>& t, Var z, std::size_t steps) {
  const Tensor<S>& x = t.value(z);
  require(x.rank() == 2 && steps > 0, ErrorCode::ShapeMismatch, "repeat_time expects [B,K] and T > 0");
  const std::size_t n = x.size();
  Tensor<S> y({steps, x.dim(0), x.dim(1)});
  for (std::size_t s = 0; s < steps; ++s) std::copy(x.values().begin(), x.values().end(), y.data() + s * n);
  return t.record(std::move(y), {z}, [z, steps, n](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    Tensor<S>& gz = t.grad(z);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t i = 0; i < n; ++i) gz[i] += gy[s * n + i];
    }
  });
}

/// Row lookup: ids are time-major [T*B]; output [T,B,D]. Id 0 (PAD) always
/// yields a zero row and never receives gradient.
template <typename S>
Var embedding(Tape<S>& t, Var table, std::span<const std::uint32_t> ids, std::size_t steps, std::size_t batch) {
  const Tensor<S>& w = t.value(table);
  require(w.rank() == 2, ErrorCode::ShapeMismatch, "embedding table must be [V,D]");
  require(ids.size() == steps * batch, ErrorCode::ShapeMismatch, "embedding ids size != T*B");
  const std::size_t vocab = w.dim(0), d = w.dim(1);
  Tensor<S> y({steps, batch, d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < vocab, ErrorCode::IdOutOfRange,
            "embedding id " + std::to_string(ids[i]) + " >= vocabulary " + std::to_string(vocab));
    if (ids[i] == 0) continue;
    std::copy_n(w.data() + ids[i] * d, d, y.data() + i * d);
  }
  auto ids_copy = std::make_shared<std::vector<std::uint32_t>>(ids.begin(), ids.end());
  return t.record(std::move(y), {table}, [table, ids_copy, d](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    Tensor<S>& gw = t.grad(table);
    const auto& idv = *ids_copy;
    for (std::size_t i = 0; i < idv.size(); ++i) {
      if (idv[i] == 0) continue;
      S* row = gw.data() + idv[i] * d;
      const S* g = gy.data() + i * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += g[c];
    }
  });
}

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors scaled by 1/(1-rate); at inference it is the identity.
template <typename S>
Var dropout(Tape<S>& t, Var a, double rate, RngStream& rng, bool training) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::InvalidArgument, "dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return a;
  const Tensor<S>& x = t.value(a);
  auto keep = std::make_shared<Tensor<S>>(x.shape());
  const S scale_up = S(1) / static_cast<S>(1.0 - rate);
  for (std::size_t i = 0; i < keep->size(); ++i) (*keep)[i] = rng.uniform() < rate ? S(0) : scale_up;
  return mul_const<S>(t, a, keep);
}

/// Softmax over the last axis with max subtraction.
template <typename S>
Var softmax(Tape<S>& t, Var a) {
  const Tensor<S>& x = t.value(a);
  require(x.cols() >= 1, ErrorCode::ShapeMismatch, "softmax over empty axis");
  const std::size_t rows = x.rows(), n = x.cols();
  Tensor<S> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const S* xr = x.data() + r * n;
    S* yr = y.data() + r * n;
    const S mx = *std::max_element(xr, xr + n);
    S z = 0;
    for (std::size_t c = 0; c < n; ++c) z += (yr[c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < n; ++c) yr[c] /= z;
  }
  return t.record(std::move(y), {a}, [a, rows, n](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    const Tensor<S>& y = t.value(self);
    Tensor<S>& ga = t.grad(a);
    for (std::size_t r = 0; r < rows; ++r) {
      S dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += gy[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * (gy[r * n + c] - dot);
    }
  });
}

inline constexpr double kProbFloor = 1e-9;

/// Per-row -log(max(p[label], 1e-9)) for probs [B,K] -> [B].
template <typename S>
Var nll(Tape<S>& t, Var probs, std::span<const std::size_t> labels) {
  const Tensor<S>& p = t.value(probs);
  const std::size_t rows = p.rows(), k = p.cols();
  require(labels.size() == rows, ErrorCode::ShapeMismatch, "nll: label count != batch");
  Tensor<S> y({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    require(labels[r] < k, ErrorCode::IdOutOfRange, "label index out of range");
    y[r] = -std::log(std::max(p[r * k + labels[r]], static_cast<S>(kProbFloor)));
  }
  auto lab = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
  return t.record(std::move(y), {probs}, [probs, lab, k](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    const Tensor<S>& p = t.value(probs);
    Tensor<S>& gp = t.grad(probs);
    for (std::size_t r = 0; r < lab->size(); ++r) {
      const S pr = p[r * k + (*lab)[r]];
      if (pr > static_cast<S>(kProbFloor)) gp[r * k + (*lab)[r]] -= gy[r] / pr;
    }
  });
}

/// Per-sample squared error between per-step distributions probs[T,B,V] and
/// one-hot targets (time-major ids [T*B]) summed over steps and vocabulary:
/// out[b] = sum_t sum_v (p - onehot)^2. Equals T*V times the elementwise MSE.
template <typename S>
Var onehot_sse(Tape<S>& t, Var probs, std::span<const std::uint32_t> targets) {
  const Tensor<S>& p = t.value(probs);
  require(p.rank() == 3 && targets.size() == p.dim(0) * p.dim(1), ErrorCode::ShapeMismatch,
          "onehot_sse expects probs [T,B,V] and T*B targets");
  const std::size_t steps = p.dim(0), batch = p.dim(1), v = p.dim(2);
  Tensor<S> y({batch});
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = s * batch + b;
      require(targets[row] < v, ErrorCode::IdOutOfRange, "target id out of range");
      const S* pr = p.data() + row * v;
      S acc = 0;
      for (std::size_t c = 0; c < v; ++c) acc += pr[c] * pr[c];
      const S pt = pr[targets[row]];
      acc += S(1) - S(2) * pt;
      y[b] += acc;
    }
  }
  auto tg = std::make_shared<std::vector<std::uint32_t>>(targets.begin(), targets.end());
  return t.record(std::move(y), {probs}, [probs, tg, steps, batch, v](Tape<S>& t, Var self) {
    const Tensor<S>& gy = t.grad(self);
    const Tensor<S>& p = t.value(probs);
    Tensor<S>& gp = t.grad(probs);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t row = s * batch + b;
        const S g2 = S(2) * gy[b];
        const S* pr = p.data() + row * v;
        S* gr = gp.data() + row * v;
        for (std::size_t c = 0; c < v; ++c) gr[c] += g2 * pr[c];
        gr[(*tg)[row]] -= g2;
      }
    }
  });
}

/// Fused (masked) LSTM over x[T,B,D] with gate order i,f,g,o:
///   a = x_t Wx + h Wh + b;  c' = f*c + i*g;  h' = o*tanh(c')
/// Steps whose mask is 0 carry (h, c) through unchanged, so the final state
/// is the state at the last unmasked step. `reverse` walks time backwards
/// (outputs stay aligned with input time). Returns [T,B,H] when
/// `return_sequence`, else the final state [B,H].
template <typename S>
Var lstm(Tape<S>& t, Var x, std::shared_ptr<const Tensor<S>> mask, Var wx, Var wh, Var bias, bool reverse,
         bool return_sequence) {
  const Tensor<S>& in = t.value(x);
  require(in.rank() == 3, ErrorCode::ShapeMismatch, "lstm input must be [T,B,D]");
  const std::size_t steps = in.dim(0), batch = in.dim(1), d = in.dim(2);
  require(steps >= 1, ErrorCode::InvalidArgument, "lstm needs at least one time step");
  const Tensor<S>& Wx = t.value(wx);
  const Tensor<S>& Wh = t.value(wh);
  const Tensor<S>& B = t.value(bias);
  require(Wx.rank() == 2 && Wx.dim(0) == d && Wx.dim(1) % 4 == 0, ErrorCode::ShapeMismatch,
          "lstm Wx must be [D,4H], got " + shape_string(Wx.shape()));
  const std::size_t h = Wx.dim(1) / 4, g4 = 4 * h;
  require(Wh.rank() == 2 && Wh.dim(0) == h && Wh.dim(1) == g4 && B.size() == g4, ErrorCode::ShapeMismatch,
          "lstm Wh/b shapes inconsistent with hidden size " + std::to_string(h));
  if (mask) {
    require(mask->size() == steps * batch, ErrorCode::ShapeMismatch, "lstm mask must be [T,B]");
  }

  struct Cache {
    std::vector<S> gates;  // [T][B][4H] activated, in processing order
    std::vector<S> hs;     // [T+1][B][H]
    std::vector<S> cs;     // [T+1][B][H]
    std::vector<S> tanh_c; // [T][B][H]
    std::vector<char> active;
  };
  auto cache = std::make_shared<Cache>();
  cache->gates.assign(steps * batch * g4, S(0));
  cache->hs.assign((steps + 1) * batch * h, S(0));
  cache->cs.assign((steps + 1) * batch * h, S(0));
  cache->tanh_c.assign(steps * batch * h, S(0));
  cache->active.assign(steps, 0);

  const auto m_at = [&mask, batch](std::size_t time, std::size_t b) -> bool {
    return !mask || (*mask)[time * batch + b] != S(0);
  };

  Tensor<S> out = return_sequence ? Tensor<S>({steps, batch, h}) : Tensor<S>({batch, h});
  RowMat<S> a(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(g4));
  const auto wx_m = mat(Wx, d, g4);
  const auto wh_m = mat(Wh, h, g4);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t time = reverse ? steps - 1 - s : s;
    S* hp = cache->hs.data() + s * batch * h;
    S* cp = cache->cs.data() + s * batch * h;
    S* hn = cache->hs.data() + (s + 1) * batch * h;
    S* cn = cache->cs.data() + (s + 1) * batch * h;
    bool any = false;
    for (std::size_t b = 0; b < batch && !any; ++b) any = m_at(time, b);
    if (!any) {
      std::copy_n(hp, batch * h, hn);
      std::copy_n(cp, batch * h, cn);
    } else {
      cache->active[s] = 1;
      a.noalias() = mat(in, batch, d, time * batch * d) * wx_m;
      a.noalias() += ConstMatMap<S>(hp, static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(h)) * wh_m;
      S* gates = cache->gates.data() + s * batch * g4;
      S* tc = cache->tanh_c.data() + s * batch * h;
      for (std::size_t b = 0; b < batch; ++b) {
        if (!m_at(time, b)) {
          std::copy_n(hp + b * h, h, hn + b * h);
          std::copy_n(cp + b * h, h, cn + b * h);
          continue;
        }
        S* gr = gates + b * g4;
        for (std::size_t j = 0; j < g4; ++j) {
          const S v = a(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) + B[j];
          gr[j] = (j >= 2 * h && j < 3 * h) ? std::tanh(v) : S(1) / (S(1) + std::exp(-v));
        }
        for (std::size_t j = 0; j < h; ++j) {
          const S ig = gr[j], fg = gr[h + j], gg = gr[2 * h + j], og = gr[3 * h + j];
          const S c = fg * cp[b * h + j] + ig * gg;
          cn[b * h + j] = c;
          tc[b * h + j] = std::tanh(c);
          hn[b * h + j] = og * tc[b * h + j];
        }
      }
    }
    if (return_sequence) std::copy_n(hn, batch * h, out.data() + time * batch * h);
  }
  if (!return_sequence) std::copy_n(cache->hs.data() + steps * batch * h, batch * h, out.data());

  return t.record(std::move(out), {x, wx, wh, bias},
                  [x, wx, wh, bias, mask, cache, steps, batch, d, h, g4, reverse, return_sequence](Tape<S>& t,
                                                                                                    Var self) {
    const Tensor<S>& gy = t.grad(self);
    const Tensor<S>& in = t.value(x);
    const auto wx_m = mat(t.value(wx), d, g4);
    const auto wh_m = mat(t.value(wh), h, g4);
    const bool need_x = t.needs_grad(x), need_wx = t.needs_grad(wx), need_wh = t.needs_grad(wh),
               need_b = t.needs_grad(bias);
    Tensor<S>* gx = need_x ? &t.grad(x) : nullptr;
    Tensor<S>* gwx = need_wx ? &t.grad(wx) : nullptr;
    Tensor<S>* gwh = need_wh ? &t.grad(wh) : nullptr;
    Tensor<S>* gb = need_b ? &t.grad(bias) : nullptr;

    std::vector<S> dh(batch * h, S(0)), dc(batch * h, S(0));
    if (!return_sequence) std::copy_n(gy.data(), batch * h, dh.data());
    RowMat<S> da(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(g4));
    RowMat<S> dh_prev(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(h));
    for (std::size_t s = steps; s-- > 0;) {
      const std::size_t time = reverse ? steps - 1 - s : s;
      if (return_sequence) {
        const S* g = gy.data() + time * batch * h;
        for (std::size_t i = 0; i < batch * h; ++i) dh[i] += g[i];
      }
      if (!cache->active[s]) continue;
      const S* gates = cache->gates.data() + s * batch * g4;
      const S* tc = cache->tanh_c.data() + s * batch * h;
      const S* cp = cache->cs.data() + s * batch * h;
      const S* hp = cache->hs.data() + s * batch * h;
      std::vector<char> row_on(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        row_on[b] = !mask || (*mask)[time * batch + b] != S(0);
        if (!row_on[b]) {
          da.row(static_cast<Eigen::Index>(b)).setZero();
          continue;
        }
        const S* gr = gates + b * g4;
        for (std::size_t j = 0; j < h; ++j) {
          const std::size_t k = b * h + j;
          const S ig = gr[j], fg = gr[h + j], gg = gr[2 * h + j], og = gr[3 * h + j];
          const S dct = dc[k] + dh[k] * og * (S(1) - tc[k] * tc[k]);
          const auto bi = static_cast<Eigen::Index>(b);
          da(bi, static_cast<Eigen::Index>(j)) = dct * gg * ig * (S(1) - ig);
          da(bi, static_cast<Eigen::Index>(h + j)) = dct * cp[k] * fg * (S(1) - fg);
          da(bi, static_cast<Eigen::Index>(2 * h + j)) = dct * ig * (S(1) - gg * gg);
          da(bi, static_cast<Eigen::Index>(3 * h + j)) = dh[k] * tc[k] * og * (S(1) - og);
          dc[k] = dct * fg;
        }
      }
      if (gwx) mat(*gwx, d, g4).noalias() += mat(in, batch, d, time * batch * d).transpose() * da;
      if (gwh) {
        mat(*gwh, h, g4).noalias() +=
            ConstMatMap<S>(hp, static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(h)).transpose() * da;
      }
      if (gb) {
        for (std::size_t j = 0; j < g4; ++j) (*gb)[j] += da.col(static_cast<Eigen::Index>(j)).sum();
      }
      if (gx) mat(*gx, batch, d, time * batch * d).noalias() += da * wx_m.transpose();
      dh_prev.noalias() = da * wh_m.transpose();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < h; ++j) {
          const std::size_t k = b * h + j;
          // Masked rows pass dh/dc straight through (dc already untouched).
          dh[k] = row_on[b] ? dh_prev(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) : dh[k];
        }
      }
    }
  });
}

}  // namespace cops::ad
