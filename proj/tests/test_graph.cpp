#include <gtest/gtest.h>

#include <emograph/graph.hpp>
#include <emograph/rng.hpp>

#include "support/oracles.hpp"

using namespace emograph;
namespace oracle = emograph::testing;

namespace {

LabelSpace names(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("e" + std::to_string(i));
  return LabelSpace(v);
}

CooccurrenceMatrix two_by_two(std::uint64_t a, std::uint64_t o, std::uint64_t both) {
  return CooccurrenceMatrix(2, {a, both, both, o});
}

}  // namespace

// ---------------------------------------------------------------------------
// normalize_asymmetric

TEST(Normalize, AnticipationOptimismRatios) {
  const Tensor g1 = normalize_asymmetric(two_by_two(425, 1143, 197));
  EXPECT_EQ(g1(0, 1), 197.0 / 425.0);
  EXPECT_EQ(g1(1, 0), 197.0 / 1143.0);
  EXPECT_NEAR(g1(0, 1), 0.4635, 1e-4);
  EXPECT_NEAR(g1(1, 0), 0.1724, 1e-4);
  EXPECT_EQ(g1(0, 0), 1.0);
}

TEST(Normalize, DiagonalCountsGiveIdentity) {
  EXPECT_EQ(normalize_asymmetric(CooccurrenceMatrix(2, {5, 0, 0, 3})), Tensor::identity(2));
}

TEST(Normalize, ZeroCountRowIsZero) {
  const Tensor g1 = normalize_asymmetric(CooccurrenceMatrix(3, {4, 0, 2, 0, 0, 0, 2, 0, 3}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g1(1, j), 0.0);
}

// ---------------------------------------------------------------------------
// binarize

TEST(Binarize, ThresholdOnPaperRatios) {
  const Tensor g1 = Tensor::matrix({{1, 0.46}, {0.17, 1}});
  EXPECT_EQ(binarize(g1, 0.4), Tensor::matrix({{1, 1}, {0, 1}}));
}

TEST(Binarize, ExtremeThresholds) {
  const Tensor g1 = Tensor::matrix({{1, 0.3, 0}, {0, 0, 0}, {0.999, 1, 1}});
  EXPECT_EQ(binarize(g1, 0.0), Tensor(3, 3, 1.0));
  EXPECT_EQ(binarize(g1, 1.0), Tensor::matrix({{1, 0, 0}, {0, 0, 0}, {0, 1, 1}}));
  EXPECT_THROW(binarize(g1, 1.5), ConfigError);
}

// ---------------------------------------------------------------------------
// reweight

TEST(Reweight, TwoNeighboursShareWeight) {
  const Tensor g = reweight(Tensor::matrix({{1, 1, 1}, {0, 1, 0}, {0, 0, 1}}), 0.35);
  EXPECT_EQ(g(0, 1), 0.5);
  EXPECT_EQ(g(0, 2), 0.5);
  EXPECT_EQ(g(0, 0), 0.65);
}

TEST(Reweight, IsolatedNodeKeepsOnlySelfWeight) {
  const Tensor g = reweight(Tensor::matrix({{1, 0}, {1, 1}}), 0.35);
  EXPECT_EQ(g(0, 0), 0.65);
  EXPECT_EQ(g(0, 1), 0.0);
}

TEST(Reweight, ZeroWeightGivesUnitDiagonal) {
  const Tensor g = reweight(Tensor::matrix({{1, 1}, {1, 1}}), 0.0);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(1, 1), 1.0);
  EXPECT_THROW(reweight(Tensor::identity(2), 1.0), ConfigError);
}

TEST(Reweight, ZeroRowStillGetsDiagonal) {
  const Tensor g = reweight(Tensor::matrix({{0, 0}, {0, 1}}), 0.2);
  EXPECT_EQ(g(0, 0), 0.8);
}

TEST(Reweight, OffDiagonalEntriesEqualAndSumToOne) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    Tensor g2(n, n);
    for (double& v : g2.data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    const Tensor g = reweight(g2, rng.uniform(0.0, 0.99));
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0, first = -1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || g(i, j) == 0.0) continue;
        if (first < 0) first = g(i, j);
        EXPECT_EQ(g(i, j), first);
        sum += g(i, j);
      }
      if (first > 0) {
        EXPECT_NEAR(sum, 1.0, 1e-15);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// gcn_normalize

TEST(GcnNormalize, ScalarMatrixBecomesIdentity) {
  Tensor g = Tensor::identity(4);
  for (double& v : g.data()) v *= 0.65;
  const Tensor gt = gcn_normalize(g);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(gt(i, j), i == j ? 1.0 : 0.0, 1e-15);
}

TEST(GcnNormalize, TwoNodeHandComputation) {
  const Tensor gt = gcn_normalize(Tensor::matrix({{0.65, 1}, {1, 0.65}}));
  EXPECT_NEAR(gt(0, 0), 0.65 / 1.65, 1e-15);
  EXPECT_NEAR(gt(0, 1), 1.0 / 1.65, 1e-15);
  EXPECT_NEAR(gt(1, 0), 1.0 / 1.65, 1e-15);
}

TEST(GcnNormalize, PreservesSymmetry) {
  Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    Tensor g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      g(i, i) = rng.uniform(0.01, 1.0);
      for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i) = rng.uniform() < 0.5 ? rng.uniform() : 0.0;
    }
    const Tensor gt = gcn_normalize(g);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(gt(i, j), gt(j, i), 1e-15);
  }
}

// ---------------------------------------------------------------------------
// Full chain

TEST(BuildGraph, MatchesBruteForceOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(4);
    const auto m = oracle::random_counts(rng, n, 1 + rng.below(30), rng.uniform(0.1, 0.7));
    const double mu = rng.uniform(), w = rng.uniform(0.0, 0.99);
    const EmotionGraph g = build_graph(oracle::to_cooccurrence(m), names(n), mu, w);
    const auto want = oracle::graph_chain(m, mu, w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(g.g1(i, j), want.g1[i][j]);
        EXPECT_EQ(g.g2(i, j), want.g2[i][j]);
        EXPECT_EQ(g.g(i, j), want.g[i][j]);
      }
  }
}

TEST(BuildGraph, InvariantsHold) {
  Rng rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    const auto m = oracle::random_counts(rng, n, rng.below(40), 0.3);
    const double w = rng.uniform(0.0, 0.99);
    const EmotionGraph g = build_graph(oracle::to_cooccurrence(m), names(n), rng.uniform(), w);
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i][i] > 0) {
        EXPECT_EQ(g.g1(i, i), 1.0);
      }
      EXPECT_EQ(g.g(i, i), 1.0 - w);
      double off = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_GE(g.g1(i, j), 0.0);
        EXPECT_LE(g.g1(i, j), 1.0);
        EXPECT_TRUE(g.g2(i, j) == 0.0 || g.g2(i, j) == 1.0);
        EXPECT_TRUE(std::isfinite(g.g_tilde(i, j)));
        if (j != i) off += g.g(i, j);
      }
      EXPECT_TRUE(off == 0.0 || std::abs(off - 1.0) < 1e-15);
    }
  }
}

TEST(BuildGraph, RaisingMuNeverAddsEdges) {
  Rng rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    const auto m = oracle::to_cooccurrence(oracle::random_counts(rng, n, 25, 0.4));
    double lo = rng.uniform(), hi = rng.uniform();
    if (lo > hi) std::swap(lo, hi);
    const auto a = build_graph(m, names(n), lo, 0.35), b = build_graph(m, names(n), hi, 0.35);
    for (std::size_t k = 0; k < n * n; ++k) EXPECT_LE(b.g2[k], a.g2[k]);
  }
}

TEST(BuildGraph, InvariantUnderScalingCounts) {
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    auto m = oracle::random_counts(rng, n, 20, 0.4);
    auto scaled = m;
    const std::uint64_t c = 2 + rng.below(50);
    for (auto& row : scaled)
      for (auto& v : row) v *= c;
    const double mu = rng.uniform();
    const auto a = build_graph(oracle::to_cooccurrence(m), names(n), mu, 0.35);
    const auto b = build_graph(oracle::to_cooccurrence(scaled), names(n), mu, 0.35);
    EXPECT_EQ(a.g2, b.g2);
    EXPECT_EQ(a.g, b.g);
    EXPECT_EQ(a.g_tilde, b.g_tilde);
    for (std::size_t k = 0; k < n * n; ++k) EXPECT_NEAR(a.g1[k], b.g1[k], 1e-15);
  }
}

TEST(BuildGraph, RejectsOutOfDomainParameters) {
  const auto m = two_by_two(3, 3, 1);
  EXPECT_THROW(build_graph(m, names(2), -0.1, 0.35), ConfigError);
  EXPECT_THROW(build_graph(m, names(2), 0.4, 1.0), ConfigError);
  EXPECT_THROW(build_graph(m, names(3), 0.4, 0.35), DimensionError);
}

// ---------------------------------------------------------------------------
// subgraph

TEST(Subgraph, KeepsOrderAndResolvesAliases) {
  const LabelSpace semeval({"anger", "anticipation", "disgust", "fear", "joy", "love", "optimism",
                            "pessimism", "sadness", "surprise", "trust"});
  const auto g = build_graph(CooccurrenceMatrix(11), semeval, 0.4, 0.35);
  EXPECT_EQ(subgraph(g, {"sadness", "anger"}), (std::vector<std::size_t>{8, 0}));
  std::vector<std::size_t> all(11);
  for (std::size_t i = 0; i < 11; ++i) all[i] = i;
  EXPECT_EQ(subgraph(g, semeval.names()), all);
  const auto six = subgraph(g, {"anger", "sadness", "happiness", "disgust", "fear", "surprise"},
                            {{"happiness", "joy"}});
  EXPECT_EQ(six, (std::vector<std::size_t>{0, 8, 4, 2, 3, 9}));
}

TEST(Subgraph, UnknownNameIsNamed) {
  const auto g = build_graph(CooccurrenceMatrix(2), names(2), 0.4, 0.35);
  try {
    subgraph(g, {"e0", "happiness"});
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("happiness"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Export

TEST(Export, DotHasOneEdgePerOffDiagonalEntry) {
  const auto g = build_graph(two_by_two(425, 1143, 197), LabelSpace({"a", "b"}), 0.4, 0.35);
  const std::string dot = export_dot(g);
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_NE(dot.find("\"a\" -> \"b\""), std::string::npos);
  EXPECT_EQ(dot.find("\"b\" -> \"a\""), std::string::npos);
  std::size_t arrows = 0;
  for (std::size_t p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 1)) ++arrows;
  EXPECT_EQ(arrows, 1u);
}

TEST(Export, JsonRoundTripIsBitIdentical) {
  Rng rng(59);
  const auto m = oracle::to_cooccurrence(oracle::random_counts(rng, 5, 30, 0.4));
  const auto g = build_graph(m, names(5), 0.3, 0.35);
  const auto back = graph_from_json(nlohmann::json::parse(export_json(g)));
  EXPECT_EQ(back.labels.names(), g.labels.names());
  EXPECT_EQ(back.mu, g.mu);
  EXPECT_EQ(back.w, g.w);
  EXPECT_EQ(back.g1, g.g1);
  EXPECT_EQ(back.g2, g.g2);
  EXPECT_EQ(back.g, g.g);
  EXPECT_EQ(back.g_tilde, g.g_tilde);
}

TEST(Export, MalformedJsonIsFormatError) {
  EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"labels": ["a", "b"], "mu": 0.4})")),
               FormatError);
}

TEST(Degrees, CountOffDiagonalEdges) {
  const auto g = build_graph(CooccurrenceMatrix(3, {10, 6, 0, 6, 8, 0, 0, 0, 4}), names(3), 0.5, 0.35);
  EXPECT_EQ(out_degree(g, 0), 1u);  // 6/10 >= 0.5
  EXPECT_EQ(out_degree(g, 1), 1u);  // 6/8
  EXPECT_EQ(in_degree(g, 2), 0u);
}
