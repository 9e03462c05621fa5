#include <cmath>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include <emograph/adam.hpp>
#include <emograph/autodiff.hpp>
#include <emograph/init.hpp>
#include <emograph/rng.hpp>

#include "support/finite_diff.hpp"

using namespace emograph;
using emograph::testing::numeric_gradients;
using emograph::testing::rel_err;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

using Builder = std::function<ad::Var(std::vector<ad::Var>&)>;

// Worst relative error of d/dx sum(R .* f(x)) over all inputs, with R a
// fixed random weighting so every output entry matters differently.
double op_gradient_error(std::vector<Tensor> inputs, const Builder& f, std::uint64_t seed = 7) {
  Rng rng(seed);
  Tensor weights;
  auto loss_value = [&](bool with_grads, std::vector<Tensor>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (auto& t : inputs) leaves.push_back(tape.leaf(t));
    ad::Var out = f(leaves);
    if (weights.empty()) weights = random_tensor(rng, out.shape().rows, out.shape().cols);
    ad::Var loss = ad::sum(ad::mul(out, tape.constant(weights)));
    if (with_grads) {
      tape.backward(loss);
      for (auto& l : leaves) grads->push_back(l.grad());
    }
    return loss.value().item();
  };
  std::vector<Tensor> analytic;
  loss_value(true, &analytic);
  std::vector<Tensor*> ptrs;
  for (auto& t : inputs) ptrs.push_back(&t);
  const auto numeric = numeric_gradients(ptrs, [&] { return loss_value(false, nullptr); });
  return emograph::testing::max_rel_err(analytic, numeric);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics

TEST(Tensor, RejectsMismatchedDataAndZeroShapes) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), DimensionError);
}

TEST(Tensor, TransposeSwapsIndices) {
  const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor t = a.transposed();
  ASSERT_EQ(t.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a(i, j), t(j, i));
}

// ---------------------------------------------------------------------------
// matmul

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(kernels::matmul(Tensor::identity(2), m), m);
}

TEST(Matmul, SelectorPicksZero) {
  EXPECT_EQ(kernels::matmul(Tensor::matrix({{1, 0}}), Tensor::matrix({{0}, {5}})), Tensor::matrix({{0}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    kernels::matmul(Tensor(2, 3), Tensor(2, 3));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find(" x [2x3]"), std::string::npos);
  }
}

TEST(Matmul, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  const double err = op_gradient_error({random_tensor(rng, 3, 4), random_tensor(rng, 4, 2)},
                                       [](auto& v) { return ad::matmul(v[0], v[1]); });
  EXPECT_LT(err, 1e-6);
}

TEST(Matmul, AccumulatingKernelsAgreeWithExplicitTranspose) {
  Rng rng(3);
  const Tensor a = random_tensor(rng, 4, 3), b = random_tensor(rng, 4, 5), c = random_tensor(rng, 2, 5);
  Tensor tn(3, 5);
  kernels::matmul_tn_acc(a, b, tn);
  Tensor nt(4, 2);
  kernels::matmul_nt_acc(b, c, nt);
  const Tensor tn_ref = kernels::matmul(a.transposed(), b);
  const Tensor nt_ref = kernels::matmul(b, c.transposed());
  for (std::size_t k = 0; k < tn.size(); ++k) EXPECT_NEAR(tn[k], tn_ref[k], 1e-14);
  for (std::size_t k = 0; k < nt.size(); ++k) EXPECT_NEAR(nt[k], nt_ref[k], 1e-14);
}

// ---------------------------------------------------------------------------
// Elementwise

TEST(Elementwise, ReluSignCases) {
  ad::Tape t;
  EXPECT_EQ(ad::relu(t.constant(Tensor::row({-1, 0, 2}))).value(), Tensor::row({0, 0, 2}));
}

TEST(Elementwise, SigmoidAtZeroIsHalf) { EXPECT_EQ(kernels::sigmoid(0.0), 0.5); }

TEST(Elementwise, SigmoidOfLargeNegativeStaysPositiveAndFinite) {
  const double stable = kernels::sigmoid(-745.0);
  EXPECT_TRUE(std::isfinite(stable));
  EXPECT_GT(stable, 0.0);
  EXPECT_LE(stable, 1e-300);
  // The textbook form 1 / (1 + e^745) overflows the intermediate to inf.
  const double naive = 1.0 / (1.0 + std::exp(745.0));
  EXPECT_EQ(naive, 0.0);
}

TEST(Elementwise, SigmoidIsSymmetric) {
  for (double x = -30.0; x <= 30.0; x += 0.37) {
    EXPECT_NEAR(kernels::sigmoid(x) + kernels::sigmoid(-x), 1.0, 1e-15) << x;
  }
}

TEST(Elementwise, ScalarBroadcastAndShapeErrors) {
  ad::Tape t;
  const auto a = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(ad::add(a, t.constant(Tensor::scalar(1))).value(), Tensor::matrix({{2, 3}, {4, 5}}));
  EXPECT_EQ(ad::mul(t.constant(Tensor::scalar(2)), a).value(), Tensor::matrix({{2, 4}, {6, 8}}));
  EXPECT_THROW(ad::add(a, t.constant(Tensor(1, 2))), DimensionError);
}

TEST(Elementwise, OpGradientsMatchFiniteDifferences) {
  Rng rng(5);
  const Tensor x = random_tensor(rng, 3, 4), y = random_tensor(rng, 3, 4);
  const Tensor s = random_tensor(rng, 1, 1), bias = random_tensor(rng, 1, 4);
  const std::vector<std::pair<const char*, std::pair<std::vector<Tensor>, Builder>>> cases = {
      {"add", {{x, y}, [](auto& v) { return ad::add(v[0], v[1]); }}},
      {"add_scalar", {{x, s}, [](auto& v) { return ad::add(v[0], v[1]); }}},
      {"mul", {{x, y}, [](auto& v) { return ad::mul(v[0], v[1]); }}},
      {"mul_scalar", {{s, y}, [](auto& v) { return ad::mul(v[0], v[1]); }}},
      {"scale", {{x}, [](auto& v) { return ad::scale(v[0], -2.5); }}},
      {"bias", {{x, bias}, [](auto& v) { return ad::add_row_bias(v[0], v[1]); }}},
      {"relu", {{x}, [](auto& v) { return ad::relu(v[0]); }}},
      {"leaky", {{x}, [](auto& v) { return ad::leaky_relu(v[0], 0.2); }}},
      {"sigmoid", {{x}, [](auto& v) { return ad::sigmoid(v[0]); }}},
      {"tanh", {{x}, [](auto& v) { return ad::tanh(v[0]); }}},
      {"transpose", {{x}, [](auto& v) { return ad::transpose(v[0]); }}},
      {"mean_rows", {{x}, [](auto& v) { return ad::mean_rows(v[0]); }}},
      {"mean", {{x}, [](auto& v) { return ad::mean(v[0]); }}},
      {"softmax", {{x}, [](auto& v) { return ad::softmax_rows(v[0]); }}},
      {"slice", {{x}, [](auto& v) { return ad::slice_cols(v[0], 1, 2); }}},
      {"concat_cols",
       {{x, y}, [](auto& v) { return ad::concat_cols(std::vector<ad::Var>{v[0], v[1], v[0]}); }}},
      {"concat_rows",
       {{x, y}, [](auto& v) { return ad::concat_rows(std::vector<ad::Var>{v[1], v[0]}); }}},
      {"outer_add",
       {{random_tensor(rng, 3, 1), random_tensor(rng, 4, 1)},
        [](auto& v) { return ad::outer_add(v[0], v[1]); }}},
      {"layer_norm",
       {{x, random_tensor(rng, 1, 4), bias}, [](auto& v) { return ad::layer_norm(v[0], v[1], v[2]); }}},
      {"gather",
       {{x},
        [](auto& v) {
          const std::vector<std::size_t> ids{2, 0, 2};
          return ad::gather_rows(v[0], ids);
        }}},
  };
  for (const auto& [name, c] : cases) {
    EXPECT_LT(op_gradient_error(c.first, c.second), 1e-6) << name;
  }
}

TEST(Elementwise, MaskedSoftmaxGradientMatchesFiniteDifferences) {
  Rng rng(8);
  const Tensor mask = Tensor::matrix({{1, 0, 1}, {0, 1, 0}, {1, 1, 1}});
  const double err = op_gradient_error({random_tensor(rng, 3, 3)},
                                       [&](auto& v) { return ad::softmax_rows(v[0], mask); });
  EXPECT_LT(err, 1e-6);
}

TEST(Elementwise, LossGradientsMatchFiniteDifferences) {
  Rng rng(9);
  const Tensor y = Tensor::matrix({{1, 0, 1}, {0, 0, 1}});
  EXPECT_LT(op_gradient_error({random_tensor(rng, 2, 3, -3, 3)},
                              [&](auto& v) { return ad::sigmoid_cross_entropy(v[0], y); }),
            1e-6);
  const std::vector<std::size_t> keep{0, 2}, gold{2, 0};
  EXPECT_LT(op_gradient_error({random_tensor(rng, 2, 3, -3, 3)},
                              [&](auto& v) { return ad::subset_softmax_cross_entropy(v[0], keep, gold); }),
            1e-6);
}

// ---------------------------------------------------------------------------
// Dropout

TEST(Dropout, IdentityAtEvalAndForZeroRate) {
  Rng rng(1);
  ad::Tape t;
  const Tensor x = Tensor::matrix({{1, 2, 3}});
  EXPECT_EQ(ad::dropout(t.constant(x), 0.5, rng, false).value(), x);
  EXPECT_EQ(ad::dropout(t.constant(x), 0.0, rng, true).value(), x);
}

TEST(Dropout, RejectsRateOutsideUnitInterval) {
  Rng rng(1);
  ad::Tape t;
  const auto x = t.constant(Tensor(1, 3, 1.0));
  EXPECT_THROW(ad::dropout(x, 1.0, rng, true), ConfigError);
  EXPECT_THROW(ad::dropout(x, -0.1, rng, true), ConfigError);
}

TEST(Dropout, SurvivorsScaledAndMaskFollowsStream) {
  const double p = 0.3;
  Rng rng(42), replay(42);
  ad::Tape t;
  const Tensor x(4, 50, 2.0);
  const Tensor y = ad::dropout(t.constant(x), p, rng, true).value();
  std::size_t kept = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const bool keep = replay.uniform() >= p;
    EXPECT_EQ(y[k], keep ? 2.0 / (1.0 - p) : 0.0);
    kept += keep;
  }
  EXPECT_GT(kept, 100u);
  EXPECT_LT(kept, 180u);
}

// ---------------------------------------------------------------------------
// softmax_rows

TEST(Softmax, UniformRow) {
  const Tensor y = ad::softmax_rows_value(Tensor::row({0, 0, 0}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, SingleSurvivorUnderMask) {
  const Tensor mask = Tensor::row({1, 0});
  const Tensor y = ad::softmax_rows_value(Tensor::row({10, 10}), &mask);
  EXPECT_EQ(y, Tensor::row({1, 0}));
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(2);
  const Tensor y = ad::softmax_rows_value(random_tensor(rng, 4, 5, -20, 20));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (double v : y.row_span(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, FullyMaskedRowNamesTheRow) {
  const Tensor mask = Tensor::matrix({{1, 1}, {0, 0}});
  try {
    ad::softmax_rows_value(Tensor(2, 2), &mask);
    FAIL() << "expected DegenerateRowError";
  } catch (const DegenerateRowError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(Softmax, InvariantUnderRowShift) {
  Rng rng(4);
  const Tensor x = random_tensor(rng, 3, 6, -5, 5);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 6; ++c) shifted(r, c) += 100.0 * (r + 1);
  const Tensor a = ad::softmax_rows_value(x), b = ad::softmax_rows_value(shifted);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

// ---------------------------------------------------------------------------
// backward

TEST(Backward, SumGivesOnes) {
  ad::Tape t;
  auto w = t.leaf(Tensor(2, 2, 0.7));
  t.backward(ad::sum(w));
  EXPECT_EQ(w.grad(), Tensor(2, 2, 1.0));
}

TEST(Backward, ReluGate) {
  ad::Tape t;
  auto w = t.leaf(Tensor::matrix({{-1, 2}}));
  t.backward(ad::sum(ad::relu(w)));
  EXPECT_EQ(w.grad(), Tensor::matrix({{0, 1}}));
}

TEST(Backward, UnreachableLeafGetsZero) {
  ad::Tape t;
  auto used = t.leaf(Tensor(1, 2, 1.0));
  auto unused = t.leaf(Tensor(3, 1, 1.0));
  t.backward(ad::sum(used));
  EXPECT_EQ(unused.grad(), Tensor(3, 1, 0.0));
}

TEST(Backward, NonScalarLossIsContractError) {
  ad::Tape t;
  auto w = t.leaf(Tensor(2, 2, 1.0));
  EXPECT_THROW(t.backward(w), ContractError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  ad::Tape t;
  auto x = t.leaf(Tensor::scalar(3.0));
  auto y = ad::mul(x, x);  // x^2
  t.backward(ad::add(y, x));
  EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(Backward, RunningTwiceGivesSameGradient) {
  ad::Tape t;
  auto x = t.leaf(Tensor::row({1, -2, 3}));
  auto loss = ad::sum(ad::mul(x, x));
  t.backward(loss);
  const Tensor first = x.grad();
  t.backward(loss);
  EXPECT_EQ(x.grad(), first);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::matrix({{1, -2}, {3, 4}});
  const Tensor before = p;
  const Tensor g(2, 2, 0.0);
  Adam opt(std::vector<const Tensor*>{&p}, AdamOptions{});
  for (int i = 0; i < 5; ++i) opt.step(std::vector<Tensor*>{&p}, std::vector<const Tensor*>{&g});
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(Adam, FirstStepMatchesHandRecurrence) {
  Tensor p = Tensor::scalar(0.0);
  const Tensor g = Tensor::scalar(1.0);
  Adam opt(std::vector<const Tensor*>{&p}, AdamOptions{.lr = 0.1});
  opt.step(std::vector<Tensor*>{&p}, std::vector<const Tensor*>{&g});
  // m = 0.1, v = 0.001; bias-corrected m_hat = 1, v_hat = 1.
  const double m = 0.1 * 1.0, v = 0.001 * 1.0;
  const double m_hat = m / (1 - 0.9), v_hat = v / (1 - 0.999);
  EXPECT_NEAR(p.item(), -0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
  EXPECT_NEAR(p.item(), -0.1, 1e-8);
}

TEST(Adam, MinimisesQuadratic) {
  Tensor w = Tensor::scalar(5.0);
  Adam opt(std::vector<const Tensor*>{&w}, AdamOptions{.lr = 0.1});
  for (int i = 0; i < 100; ++i) {
    const Tensor g = Tensor::scalar(2.0 * w.item());
    opt.step(std::vector<Tensor*>{&w}, std::vector<const Tensor*>{&g});
  }
  EXPECT_LT(std::abs(w.item()), 0.5);
}

TEST(Adam, MomentsTrackParameterShapes) {
  Tensor a(2, 3), b(1, 4);
  Adam opt(std::vector<const Tensor*>{&a, &b}, AdamOptions{});
  ASSERT_EQ(opt.first_moments().size(), 2u);
  EXPECT_EQ(opt.first_moments()[1].shape(), b.shape());
  EXPECT_EQ(opt.second_moments()[0].shape(), a.shape());
  const Tensor wrong(3, 2);
  EXPECT_THROW(opt.step(std::vector<Tensor*>{&a, &b}, std::vector<const Tensor*>{&wrong, &b}),
               DimensionError);
}

// ---------------------------------------------------------------------------
// init and Rng

TEST(Init, Zeros) { EXPECT_EQ(init_tensor({2, 2}, Zeros{}, 1), Tensor(2, 2, 0.0)); }

TEST(Init, SameSeedIsBitIdentical) {
  EXPECT_EQ(init_tensor({7, 5}, GlorotUniform{}, 99), init_tensor({7, 5}, GlorotUniform{}, 99));
  EXPECT_NE(init_tensor({7, 5}, GlorotUniform{}, 99), init_tensor({7, 5}, GlorotUniform{}, 100));
}

TEST(Init, GlorotRespectsBound) {
  const Tensor t = init_tensor({100, 100}, GlorotUniform{}, 3);
  const double bound = std::sqrt(6.0 / 200.0);
  double worst = 0.0;
  for (double v : t.data()) worst = std::max(worst, std::abs(v));
  EXPECT_LE(worst, bound);
  EXPECT_GT(worst, 0.9 * bound);
}

TEST(Init, UniformRange) {
  const Tensor t = init_tensor({50, 20}, Uniform{-0.1, 0.1}, 5);
  for (double v : t.data()) {
    EXPECT_GE(v, -0.1);
    EXPECT_LT(v, 0.1);
  }
}

TEST(Rng, ReproducibleStreamAndUnitInterval) {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  Rng c(5);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(c.below(7), 7u);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(9);
  std::vector<int> v(20);
  for (int i = 0; i < 20; ++i) v[i] = i;
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);
}
