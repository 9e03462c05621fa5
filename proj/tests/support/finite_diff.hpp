#pragma once

// Central finite differences, for checking reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <emograph/tensor.hpp>

namespace emograph::testing {

/// Relative error with an absolute floor so that two near-zero values
/// compare as equal instead of dividing noise by noise.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// d loss / d params[t][k] for every entry, by (f(x+h) - f(x-h)) / 2h.
/// `params` is perturbed in place and restored; `loss` must read it.
inline std::vector<Tensor> numeric_gradients(std::vector<Tensor*> params,
                                             const std::function<double()>& loss, double h = 1e-5) {
  std::vector<Tensor> out;
  for (Tensor* p : params) {
    Tensor g(p->shape(), 0.0);
    for (std::size_t k = 0; k < p->size(); ++k) {
      const double x = (*p)[k];
      (*p)[k] = x + h;
      const double up = loss();
      (*p)[k] = x - h;
      const double down = loss();
      (*p)[k] = x;
      g[k] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Largest relative error between two gradient lists.
inline double max_rel_err(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                          double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t k = 0; k < a[t].size(); ++k)
      worst = std::max(worst, rel_err(a[t][k], b[t][k], floor));
  return worst;
}

}  // namespace emograph::testing
