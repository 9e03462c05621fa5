#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace emograph {

/// Deterministic 64-bit generator shared by every stochastic step
/// (initialization, shuffling, dropout, fold assignment).
///
/// Seeding runs splitmix64 once over the user seed:
///   z = seed + 0x9E3779B97F4A7C15
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   state = z ^ (z >> 31)            (state 0 is replaced by 0x9E3779B97F4A7C15)
///
/// Each draw is xorshift64*:
///   x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  state = x
///   output = x * 0x2545F4914F6CDD1D   (mod 2^64)
///
/// uniform() maps the top 53 output bits to [0, 1): (output >> 11) * 2^-53.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    state_ = z ^ (z >> 31);
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
  }

  std::uint64_t next() noexcept {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t r = next();
    while (r >= limit) r = next();
    return r % bound;
  }

  /// Fisher-Yates from the back: for i = n-1 .. 1, swap(v[i], v[below(i+1)]).
  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace emograph
