#pragma once

// Reverse-mode automatic differentiation over 2-D tensors.
//
// A Tape records every op of one forward pass. Nodes are appended in
// creation order, and an op's inputs always precede it, so walking the
// nodes backwards is a reverse topological order: backward() visits each
// op exactly once. Gradient buffers are zero-filled at the start of
// backward() for every node that can reach a leaf.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace emograph::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; receives a gradient from backward().
  Var leaf(Tensor value) { return push(std::move(value), true, nullptr); }

  /// Input that never needs a gradient.
  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  /// Records an op output. The node needs a gradient iff any parent does.
  Var record(Tensor value, std::initializer_list<std::size_t> parents, Backward backward) {
    return record(std::move(value), std::span<const std::size_t>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  Var record(Tensor value, std::span<const std::size_t> parents, Backward backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_.at(p).needs_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  /// Gradient buffer of a node; all-zero for nodes no gradient reached.
  const Tensor& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.empty()) throw ContractError("autodiff: gradient requested before backward()");
    return n.grad;
  }
  Tensor& grad_mut(std::size_t id) { return nodes_.at(id).grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(const Var& loss) {
    if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    const Tensor& lv = value(loss.id());
    if (!lv.is_scalar()) {
      throw ContractError("backward: loss must be scalar, got " + lv.shape().str());
    }
    for (auto& n : nodes_) n.grad = Tensor(n.value.shape(), 0.0);
    if (!nodes_[loss.id()].needs_grad) return;
    nodes_[loss.id()].grad[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool needs_grad = false;
  };

  Var push(Tensor value, bool needs, Backward bw) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(bw), needs});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("autodiff: operands live on different tapes");
  }
  return *a.tape();
}

// Elementwise binary broadcast: equal shapes, or one side is 1x1.
enum class Broadcast { kEqual, kLeftScalar, kRightScalar };

inline Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kEqual;
  if (a.size() == 1) return Broadcast::kLeftScalar;
  if (b.size() == 1) return Broadcast::kRightScalar;
  throw DimensionError(std::string(op) + ": shapes " + a.str() + " and " + b.str() +
                       " do not broadcast");
}

}  // namespace detail

/// Row softmax with max subtraction. With a mask, entries whose mask value
/// is zero are excluded and come out exactly 0.
inline Tensor softmax_rows_value(const Tensor& x, const Tensor* mask = nullptr) {
  if (mask && mask->shape() != x.shape()) {
    throw DimensionError("softmax_rows: mask " + mask->shape().str() + " vs input " +
                         x.shape().str());
  }
  Tensor y(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -INFINITY;
    bool any = false;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      mx = std::max(mx, x(i, j));
      any = true;
    }
    if (!any) throw DegenerateRowError(i);
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      const double e = std::exp(x(i, j) - mx);
      y(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= total;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(ia)) kernels::matmul_nt_acc(g, tp.value(ib), tp.grad_mut(ia));
    if (tp.needs_grad(ib)) kernels::matmul_tn_acc(tp.value(ia), g, tp.grad_mut(ib));
  });
}

inline Var transpose(const Var& a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(a.value().transposed(), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  const auto kind = detail::broadcast_kind(a.shape(), b.shape(), "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(kind == detail::Broadcast::kLeftScalar ? bv.shape() : av.shape());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = av[kind == detail::Broadcast::kLeftScalar ? 0 : k] +
             bv[kind == detail::Broadcast::kRightScalar ? 0 : k];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib, kind](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (tp.needs_grad(ia)) tp.grad_mut(ia)[kind == detail::Broadcast::kLeftScalar ? 0 : k] += g[k];
      if (tp.needs_grad(ib)) tp.grad_mut(ib)[kind == detail::Broadcast::kRightScalar ? 0 : k] += g[k];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  const auto kind = detail::broadcast_kind(a.shape(), b.shape(), "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto ai = [kind](std::size_t k) { return kind == detail::Broadcast::kLeftScalar ? 0 : k; };
  auto bi = [kind](std::size_t k) { return kind == detail::Broadcast::kRightScalar ? 0 : k; };
  Tensor out(kind == detail::Broadcast::kLeftScalar ? bv.shape() : av.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[ai(k)] * bv[bi(k)];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib, ai, bi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (tp.needs_grad(ia)) tp.grad_mut(ia)[ai(k)] += g[k] * bv[bi(k)];
      if (tp.needs_grad(ib)) tp.grad_mut(ib)[bi(k)] += g[k] * av[ai(k)];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_mut(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += c * g[k];
  });
}

/// x (m x n) + bias (1 x n) added to every row.
inline Var add_row_bias(const Var& x, const Var& bias) {
  Tape& t = detail::same_tape(x, bias);
  if (bias.shape().rows != 1 || bias.shape().cols != x.shape().cols) {
    throw DimensionError("add_row_bias: bias " + bias.shape().str() + " does not match " +
                         x.shape().str());
  }
  Tensor out = x.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  const std::size_t ix = x.id(), ib = bias.id();
  return t.record(std::move(out), {ix, ib}, [ix, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(ix)) {
      Tensor& gx = tp.grad_mut(ix);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad_mut(ib);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

namespace detail {

// Unary map with derivative expressed through input x and output y.
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.data()) v = f(v);
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, df](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad_mut(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * df(x[k], y[k]);
  });
}

}  // namespace detail

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& a, double slope) {
  return detail::unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a, [](double x) { return kernels::sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

/// Inverted dropout. At train time one uniform draw per entry, row-major:
/// entry kept iff draw >= p, survivors scaled by 1/(1-p). At eval time, or
/// with p == 0, the input passes through and no draws are consumed.
inline Var dropout(const Var& a, double p, Rng& rng, bool train) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout: p=" + std::to_string(p) + " outside [0,1)");
  }
  if (!train || p == 0.0) return a;
  Tape& t = *a.tape();
  Tensor mask(a.shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = rng.uniform() >= p ? keep_scale : 0.0;
  Tensor out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= mask[k];
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, mask = std::move(mask)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_mut(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * mask[k];
  });
}

// ---------------------------------------------------------------------------
// Softmax

inline Var softmax_rows(const Var& x, const Tensor* mask = nullptr) {
  Tape& t = *x.tape();
  Tensor out = softmax_rows_value(x.value(), mask);
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

inline Var softmax_rows(const Var& x, const Tensor& mask) { return softmax_rows(x, &mask); }

// ---------------------------------------------------------------------------
// Structural

/// Rows of `table` selected by `ids` (embedding lookup).
inline Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  Tape& t = *table.tape();
  const Tensor& tv = table.value();
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  Tensor out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(ids[r]) + " outside " +
                           tv.shape().str());
    }
    std::copy_n(&tv(ids[r], 0), tv.cols(), &out(r, 0));
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return t.record(std::move(out), {it}, [it, idx = std::move(idx)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gt = tp.grad_mut(it);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < g.cols(); ++j) gt(idx[r], j) += g(r, j);
  });
}

/// Column-wise mean over rows: m x n -> 1 x n.
inline Var mean_rows(const Var& x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  Tensor out(1, xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out[j] += xv(i, j);
  const double inv = 1.0 / static_cast<double>(xv.rows());
  for (double& v : out.data()) v *= inv;
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [ix, inv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < gx.rows(); ++i)
      for (std::size_t j = 0; j < gx.cols(); ++j) gx(i, j) += g[j] * inv;
  });
}

inline Var sum(const Var& x) {
  Tape& t = *x.tape();
  const auto& d = x.value().data();
  const double s = std::accumulate(d.begin(), d.end(), 0.0);
  const std::size_t ix = x.id();
  return t.record(Tensor::scalar(s), {ix}, [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (double& v : tp.grad_mut(ix).data()) v += g;
  });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

/// Horizontal concatenation of equal-height blocks.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Tape& t = *parts[0].tape();
  const std::size_t rows = parts[0].shape().rows;
  std::size_t cols = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    detail::same_tape(parts[0], p);
    if (p.shape().rows != rows) {
      throw DimensionError("concat_cols: " + p.shape().str() + " vs rows=" + std::to_string(rows));
    }
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.shape().cols;
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offsets[k] + j) = pv(i, j);
  }
  return t.record(std::move(out), ids, [ids, offsets](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.needs_grad(ids[k])) continue;
      Tensor& gp = tp.grad_mut(ids[k]);
      for (std::size_t i = 0; i < gp.rows(); ++i)
        for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offsets[k] + j);
    }
  });
}

/// Vertical concatenation of equal-width blocks.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Tape& t = *parts[0].tape();
  const std::size_t cols = parts[0].shape().cols;
  std::size_t rows = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    detail::same_tape(parts[0], p);
    if (p.shape().cols != cols) {
      throw DimensionError("concat_rows: " + p.shape().str() + " vs cols=" + std::to_string(cols));
    }
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.shape().rows;
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + offsets[k] * cols);
  }
  return t.record(std::move(out), ids, [ids, offsets](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.needs_grad(ids[k])) continue;
      Tensor& gp = tp.grad_mut(ids[k]);
      for (std::size_t q = 0; q < gp.size(); ++q) gp[q] += g[offsets[k] * g.cols() + q];
    }
  });
}

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (count == 0 || begin + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") outside " + xv.shape().str());
  }
  Tensor out(xv.rows(), count);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, begin + j);
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [ix, begin](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, begin + j) += g(i, j);
  });
}

/// out(i, j) = a(i) + b(j) for column vectors a (n x 1) and b (m x 1).
inline Var outer_add(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  if (a.shape().cols != 1 || b.shape().cols != 1) {
    throw DimensionError("outer_add: expects column vectors, got " + a.shape().str() + " and " +
                         b.shape().str());
  }
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < bv.rows(); ++j) out(i, j) = av[i] + bv[j];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        if (tp.needs_grad(ia)) tp.grad_mut(ia)[i] += g(i, j);
        if (tp.needs_grad(ib)) tp.grad_mut(ib)[j] += g(i, j);
      }
  });
}

/// Per-row layer normalization with learned gain and bias (both 1 x n).
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  Tape& t = detail::same_tape(x, gain);
  detail::same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (gain.shape() != Shape{1, n} || bias.shape() != Shape{1, n}) {
    throw DimensionError("layer_norm: gain/bias must be [1x" + std::to_string(n) + "]");
  }
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(xv.rows());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) xhat(i, j) = (xv(i, j) - mu) * inv_std[i];
  }
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = gv[j] * xhat(i, j) + bv[j];
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                          std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& gv = tp.value(ig);
        const std::size_t n = g.cols();
        for (std::size_t i = 0; i < g.rows(); ++i) {
          if (tp.needs_grad(ix)) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = g(i, j) * gv[j];
              mean_d += d;
              mean_dx += d * xhat(i, j);
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            Tensor& gx = tp.grad_mut(ix);
            for (std::size_t j = 0; j < n; ++j) {
              const double d = g(i, j) * gv[j];
              gx(i, j) += inv_std[i] * (d - mean_d - xhat(i, j) * mean_dx);
            }
          }
          for (std::size_t j = 0; j < n; ++j) {
            if (tp.needs_grad(ig)) tp.grad_mut(ig)[j] += g(i, j) * xhat(i, j);
            if (tp.needs_grad(ib)) tp.grad_mut(ib)[j] += g(i, j);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses

/// Mean over all entries of the sigmoid cross-entropy between logits and
/// 0/1 targets, evaluated as softplus(z) - y*z.
inline Var sigmoid_cross_entropy(const Var& logits, const Tensor& targets) {
  Tape& t = *logits.tape();
  const Tensor& z = logits.value();
  if (targets.shape() != z.shape()) {
    throw DimensionError("sigmoid_cross_entropy: targets " + targets.shape().str() +
                         " vs logits " + z.shape().str());
  }
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double y = targets[k];
    if (y != 0.0 && y != 1.0) {
      throw ContractError("sigmoid_cross_entropy: target " + std::to_string(y) + " not in {0,1}");
    }
    total += kernels::softplus(z[k]) - y * z[k];
  }
  const double inv = 1.0 / static_cast<double>(z.size());
  const std::size_t iz = logits.id();
  return t.record(Tensor::scalar(total * inv), {iz},
                  [iz, targets, inv](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    const Tensor& z = tp.value(iz);
                    Tensor& gz = tp.grad_mut(iz);
                    for (std::size_t k = 0; k < z.size(); ++k)
                      gz[k] += g * inv * (kernels::sigmoid(z[k]) - targets[k]);
                  });
}

/// Mean over rows of the softmax cross-entropy restricted to the columns in
/// `keep`; gold[r] is a column index that must be in `keep`. Columns outside
/// `keep` receive zero gradient.
inline Var subset_softmax_cross_entropy(const Var& logits, std::span<const std::size_t> keep,
                                        std::span<const std::size_t> gold) {
  Tape& t = *logits.tape();
  const Tensor& z = logits.value();
  if (gold.size() != z.rows()) {
    throw DimensionError("subset_softmax_cross_entropy: " + std::to_string(gold.size()) +
                         " gold indices for " + std::to_string(z.rows()) + " rows");
  }
  if (keep.empty()) throw ContractError("subset_softmax_cross_entropy: empty keep set");
  for (std::size_t k : keep) {
    if (k >= z.cols()) throw DimensionError("subset_softmax_cross_entropy: keep index out of range");
  }
  Tensor probs(z.shape(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (std::find(keep.begin(), keep.end(), gold[r]) == keep.end()) {
      throw ContractError("subset_softmax_cross_entropy: gold index " + std::to_string(gold[r]) +
                          " not in kept set");
    }
    double mx = -INFINITY;
    for (std::size_t k : keep) mx = std::max(mx, z(r, k));
    double s = 0.0;
    for (std::size_t k : keep) s += std::exp(z(r, k) - mx);
    const double lse = mx + std::log(s);
    total += lse - z(r, gold[r]);
    for (std::size_t k : keep) probs(r, k) = std::exp(z(r, k) - lse);
  }
  const double inv = 1.0 / static_cast<double>(z.rows());
  const std::size_t iz = logits.id();
  std::vector<std::size_t> gold_v(gold.begin(), gold.end());
  return t.record(Tensor::scalar(total * inv), {iz},
                  [iz, inv, probs = std::move(probs), gold_v = std::move(gold_v)](
                      Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    Tensor& gz = tp.grad_mut(iz);
                    for (std::size_t r = 0; r < probs.rows(); ++r) {
                      for (std::size_t c = 0; c < probs.cols(); ++c)
                        gz(r, c) += g * inv * probs(r, c);
                      gz(r, gold_v[r]) -= g * inv;
                    }
                  });
}

}  // namespace emograph::ad
