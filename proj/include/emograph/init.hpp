#pragma once

#include <cmath>
#include <cstdint>
#include <variant>

#include "rng.hpp"
#include "tensor.hpp"

namespace emograph {

struct GlorotUniform {};
struct Uniform {
  double lo = -0.1;
  double hi = 0.1;
};
struct Zeros {};
struct Constant {
  double value = 1.0;
};

using InitScheme = std::variant<GlorotUniform, Uniform, Zeros, Constant>;

/// Fills a new tensor from `rng`, drawing entries in row-major order.
/// Glorot treats rows as fan_in and cols as fan_out.
inline Tensor init_tensor(Shape shape, const InitScheme& scheme, Rng& rng) {
  Tensor t(shape);
  if (const auto* u = std::get_if<Uniform>(&scheme)) {
    for (double& v : t.data()) v = rng.uniform(u->lo, u->hi);
  } else if (std::holds_alternative<GlorotUniform>(scheme)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  } else if (const auto* c = std::get_if<Constant>(&scheme)) {
    t.fill(c->value);
  }
  return t;
}

inline Tensor init_tensor(Shape shape, const InitScheme& scheme, std::uint64_t seed) {
  Rng rng(seed);
  return init_tensor(shape, scheme, rng);
}

}  // namespace emograph
