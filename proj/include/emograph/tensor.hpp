#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace emograph {

/// Row-major dense shape. Every tensor in the system is a matrix: vectors
/// are 1 x n and scalars are 1 x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(check(shape)), data_(shape.size(), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(check(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw DimensionError("Tensor: " + std::to_string(data_.size()) +
                           " values do not fill shape " + shape_.str());
    }
  }

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0) : Tensor(Shape{rows, cols}, fill) {}

  /// Nested-list literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("Tensor::matrix: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
  }

  static Tensor row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{1, n}, std::move(values));
  }

  static Tensor scalar(double v) { return Tensor(Shape{1, 1}, v); }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rows() const noexcept { return shape_.rows; }
  std::size_t cols() const noexcept { return shape_.cols; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_.cols + c]; }
  const double& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t k) noexcept { return data_[k]; }
  const double& operator[](std::size_t k) const noexcept { return data_[k]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::span<const double> row_span(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * shape_.cols, shape_.cols);
  }

  double item() const {
    if (!is_scalar()) throw ContractError("Tensor::item on non-scalar " + shape_.str());
    return data_[0];
  }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void fill(double v) noexcept {
    for (double& x : data_) x = v;
  }

  Tensor transposed() const {
    Tensor t(shape_.cols, shape_.rows);
    for (std::size_t i = 0; i < shape_.rows; ++i)
      for (std::size_t j = 0; j < shape_.cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static Shape check(Shape s) {
    if (s.rows == 0 || s.cols == 0) throw DimensionError("Tensor: zero-sized shape " + s.str());
    return s;
  }

  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

/// sigmoid without overflow: for x < 0 uses e^x / (1 + e^x).
inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// C = A * B.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ: " + a.shape().str() + " x " +
                         b.shape().str());
  }
  Tensor c(a.rows(), b.cols());
  const std::size_t k_dim = a.cols();
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = &c(i, 0);
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b(k, 0);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

/// C += A^T * B  (A: k x m, B: k x n, C: m x n).
inline void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* crow = &c(i, 0);
      const double* brow = &b(k, 0);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
}

/// C += A * B^T  (A: m x k, B: n x k, C: m x n).
inline void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = &a(i, 0);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = &b(j, 0);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      c(i, j) += s;
    }
  }
}

}  // namespace kernels

}  // namespace emograph
