#pragma once

// Independent reference implementations used only by the test suites.
// They favour obviousness over speed and share no code with the library
// beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include <emograph/corpus.hpp>
#include <emograph/tensor.hpp>

namespace emograph::testing {

using Matrix = std::vector<std::vector<double>>;

struct ChainOracle {
  Matrix g1, g2, g;
};

/// Per-entry evaluation of the graph chain straight from the definitions.
inline ChainOracle graph_chain(const std::vector<std::vector<std::uint64_t>>& m, double mu, double w) {
  const std::size_t n = m.size();
  ChainOracle o{Matrix(n, std::vector<double>(n)), Matrix(n, std::vector<double>(n)),
                Matrix(n, std::vector<double>(n))};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      o.g1[i][j] = m[i][i] == 0 ? 0.0 : static_cast<double>(m[i][j]) / static_cast<double>(m[i][i]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) o.g2[i][j] = o.g1[i][j] >= mu ? 1.0 : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int neighbours = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i && o.g2[i][k] == 1.0) ++neighbours;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        o.g[i][j] = 1.0 - w;
      } else {
        o.g[i][j] = (neighbours > 0 && o.g2[i][j] == 1.0) ? 1.0 / neighbours : 0.0;
      }
    }
  }
  return o;
}

/// Random symmetric count matrix with a consistent diagonal: counts come
/// from an actual random multi-label table, so M[i][j] <= min(M[i][i], M[j][j]).
template <typename Rng>
std::vector<std::vector<std::uint64_t>> random_counts(Rng& rng, std::size_t n, std::size_t rows,
                                                      double density) {
  std::vector<std::vector<std::uint64_t>> m(n, std::vector<std::uint64_t>(n, 0));
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::size_t> on;
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform() < density) on.push_back(i);
    for (auto i : on)
      for (auto j : on) ++m[i][j];
  }
  return m;
}

inline CooccurrenceMatrix to_cooccurrence(const std::vector<std::vector<std::uint64_t>>& m) {
  std::vector<std::uint64_t> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return CooccurrenceMatrix(m.size(), flat);
}

// ---------------------------------------------------------------------------
// Metrics by explicit set arithmetic

inline std::set<std::size_t> as_set(const LabelRow& row) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < row.size(); ++i)
    if (row[i]) s.insert(i);
  return s;
}

inline double jaccard(const std::vector<LabelRow>& p, const std::vector<LabelRow>& g) {
  double total = 0.0;
  for (std::size_t r = 0; r < p.size(); ++r) {
    const auto ps = as_set(p[r]);
    const auto gs = as_set(g[r]);
    std::set<std::size_t> inter, uni;
    std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::inserter(inter, inter.end()));
    std::set_union(ps.begin(), ps.end(), gs.begin(), gs.end(), std::inserter(uni, uni.end()));
    total += uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
  }
  return total / static_cast<double>(p.size());
}

inline double f1(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

inline double micro(const std::vector<LabelRow>& p, const std::vector<LabelRow>& g) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t r = 0; r < p.size(); ++r)
    for (std::size_t c = 0; c < p[r].size(); ++c) {
      tp += p[r][c] && g[r][c];
      fp += p[r][c] && !g[r][c];
      fn += !p[r][c] && g[r][c];
    }
  return f1(tp, fp, fn);
}

inline std::vector<double> per_class_f1(const std::vector<LabelRow>& p, const std::vector<LabelRow>& g) {
  const std::size_t n = p.front().size();
  std::vector<double> out;
  for (std::size_t c = 0; c < n; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < p.size(); ++r) {
      tp += p[r][c] && g[r][c];
      fp += p[r][c] && !g[r][c];
      fn += !p[r][c] && g[r][c];
    }
    out.push_back(f1(tp, fp, fn));
  }
  return out;
}

inline double macro(const std::vector<LabelRow>& p, const std::vector<LabelRow>& g) {
  const auto per = per_class_f1(p, g);
  double s = 0.0;
  for (double v : per) s += v;
  return s / static_cast<double>(per.size());
}

}  // namespace emograph::testing
