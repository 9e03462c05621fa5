#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace emograph {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed list of parameter tensors.
class Adam {
 public:
  Adam() = default;

  Adam(std::span<const Tensor* const> params, AdamOptions opts) : opts_(opts) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape(), 0.0);
      v_.emplace_back(p->shape(), 0.0);
    }
  }

  /// One update: params[i] -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw DimensionError("Adam::step: expected " + std::to_string(m_.size()) + " tensors, got " +
                           std::to_string(params.size()) + " params / " +
                           std::to_string(grads.size()) + " grads");
    }
    for (std::size_t i = 0; i < m_.size(); ++i) {
      if (params[i]->shape() != m_[i].shape() || grads[i]->shape() != m_[i].shape()) {
        throw DimensionError("Adam::step: tensor " + std::to_string(i) + " shape " +
                             params[i]->shape().str() + " / grad " + grads[i]->shape().str() +
                             " vs state " + m_[i].shape().str());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *grads[i];
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g[k];
        v[k] = opts_.beta2 * v[k] + (1.0 - opts_.beta2) * g[k] * g[k];
        p[k] -= opts_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opts_.eps);
      }
    }
  }

  std::uint64_t steps() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return opts_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  AdamOptions opts_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace emograph
