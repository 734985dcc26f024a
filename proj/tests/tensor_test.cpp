// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iocf/error.hpp"
#include "iocf/ops.hpp"
#include "iocf/tensor.hpp"
#include "support/finite_diff.hpp"

using namespace iocf;
using iocf::testing::gradient_check;
using iocf::testing::random_tensor;

namespace {

constexpr int kSeeds = 20;
constexpr double kGradTol = 1e-4;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(TensorTest, ConstructionChecksExtents) {
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::zeros({0, 3}), DimensionError);
  auto s = Tensor::scalar(3.0);
  EXPECT_EQ(s.numel(), 1u);
  EXPECT_DOUBLE_EQ(s.item(), 3.0);
}

TEST(MatmulTest, IdentityAndHandArithmetic) {
  auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(values(ops::matmul(a, eye)), (std::vector<double>{1, 2, 3, 4}));
  auto col = Tensor::from_data({2, 1}, {5, 6});
  auto r = ops::matmul(a, col);
  EXPECT_EQ(r.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(r), (std::vector<double>{17, 39}));
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    ops::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] and [2x3]"), std::string::npos) << e.what();
  }
}

TEST(MatmulTest, GradientOfSumMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng);
    EXPECT_LT(gradient_check([&] { return ops::sum(ops::matmul(a, b)); }, {a, b}), 1e-6) << seed;
  }
}

TEST(Conv2dTest, IdentityKernel) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({5, 4, 1}, rng, 0.0, false);
  auto w = Tensor::from_data({1, 1, 1, 1}, {1.0});
  EXPECT_EQ(values(ops::conv2d(x, w)), values(x));
}

TEST(Conv2dTest, AllOnesZeroPadding) {
  auto x = Tensor::full({3, 3, 1}, 1.0);
  auto w = Tensor::full({3, 3, 1, 1}, 1.0);
  auto y = ops::conv2d(x, w);
  EXPECT_DOUBLE_EQ(y.data()[4], 9.0);  // center
  EXPECT_DOUBLE_EQ(y.data()[0], 4.0);  // corner
  EXPECT_DOUBLE_EQ(y.data()[1], 6.0);  // edge
}

TEST(Conv2dTest, ShapesAndErrors) {
  auto x = Tensor::zeros({8, 8, 3});
  EXPECT_EQ(ops::conv2d(x, Tensor::zeros({3, 3, 3, 16})).shape(), (Shape{8, 8, 16}));
  EXPECT_EQ(ops::conv2d(x, Tensor::zeros({3, 3, 3, 4}), {}, 2).shape(), (Shape{4, 4, 4}));
  EXPECT_EQ(ops::conv2d(Tensor::zeros({7, 5, 3}), Tensor::zeros({3, 3, 3, 2}), {}, 2).shape(), (Shape{4, 3, 2}));
  EXPECT_THROW(ops::conv2d(x, Tensor::zeros({3, 3, 2, 16})), DimensionError);
  EXPECT_THROW(ops::conv2d(x, Tensor::zeros({2, 2, 3, 16})), DimensionError);
}

TEST(AttentionTest, SingleKeyReturnsItsValue) {
  auto q = Tensor::from_data({1, 3}, {0.2, -0.4, 0.9});
  auto v = Tensor::from_data({1, 3}, {7, 8, 9});
  EXPECT_EQ(values(ops::attention(q, q, v)), values(v));
}

TEST(AttentionTest, EquidistantKeysAverageValues) {
  auto q = Tensor::from_data({1, 2}, {1, 0});
  auto k = Tensor::from_data({2, 2}, {0, 1, 0, -1});  // equal dot products with q
  auto v = Tensor::from_data({2, 2}, {2, 4, 6, 8});
  auto out = ops::attention(q, k, v);
  EXPECT_NEAR(out.data()[0], 4.0, 1e-12);
  EXPECT_NEAR(out.data()[1], 6.0, 1e-12);
}

TEST(AttentionTest, WeightRowsSumToOne) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto q = random_tensor({5, 8}, rng, 0.0, false);
    auto k = random_tensor({7, 8}, rng, 0.0, false);
    auto w = ops::attention_weights(ops::scale(q, 5.0), k);
    for (std::size_t i = 0; i < 5; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_GE(w.data()[i * 7 + j], 0.0);
        row += w.data()[i * 7 + j];
      }
      EXPECT_NEAR(row, 1.0, 1e-9);
    }
  }
  EXPECT_THROW(ops::attention(Tensor::zeros({1, 4}), Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), DimensionError);
}

TEST(LayerNormTest, RowsAreStandardized) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = ops::add_scalar(ops::scale(random_tensor({6, 16}, rng, 0.0, false), 3.0), 2.5);
    auto y = ops::layer_norm_rows(x);
    for (std::size_t i = 0; i < 6; ++i) {
      double mu = 0.0, var = 0.0;
      for (std::size_t j = 0; j < 16; ++j) mu += y.data()[i * 16 + j];
      mu /= 16;
      for (std::size_t j = 0; j < 16; ++j) var += std::pow(y.data()[i * 16 + j] - mu, 2);
      var /= 16;
      EXPECT_LT(std::fabs(mu), 1e-7);
      EXPECT_NEAR(var, 1.0, 1e-6);
    }
  }
}

TEST(BackwardTest, SquareGradientIsTwoX) {
  auto x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_EQ(values(Tensor::from_data({3}, {x.grad().begin(), x.grad().end()})), (std::vector<double>{2.0, -4.0, 1.0}));
}

TEST(BackwardTest, ReluFlatRegionHasZeroGradient) {
  auto x = Tensor::from_data({2}, {-0.3, 0.7}, true);
  backward(ops::sum(ops::relu(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
}

TEST(BackwardTest, AccumulatesUntilReset) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  backward(ops::sum(ops::scale(x, 3.0)));
  backward(ops::sum(ops::scale(x, 3.0)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  backward(ops::sum(ops::scale(x, 3.0)));
  EXPECT_DOUBLE_EQ(x.grad()[1], 3.0);
}

TEST(BackwardTest, NonScalarLossIsUsageError) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(ops::scale(x, 2.0)), UsageError);
  EXPECT_THROW(backward(ops::sum(Tensor::zeros({2}))), UsageError);
}

TEST(GraphTest, TopologicalOrderAndSingleVisit) {
  std::mt19937_64 rng(3);
  auto a = random_tensor({4, 3}, rng);
  auto b = random_tensor({3, 3}, rng);
  auto h = ops::relu(ops::matmul(a, b));
  auto loss = ops::sum(ops::add(h, ops::mul(h, h)));  // h is shared
  auto graph = Graph::trace(loss);
  const auto& entries = graph.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t in : entries[i].inputs) EXPECT_LT(in, i);
  }
  EXPECT_EQ(graph.op_count(), 5u);  // matmul, relu, mul, add, sum
  EXPECT_EQ(entries.size(), 7u);    // plus two leaves
  EXPECT_EQ(backward(loss, graph), graph.op_count());
}

TEST(GraphTest, NoGradGuardSkipsRecording) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  auto y = ops::sum(ops::mul(x, x));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

// Every primitive against central differences, 20 seeds each.
TEST(GradientSuite, EveryPrimitive) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto a = random_tensor({3, 4}, rng, 0.05);
    auto b = random_tensor({3, 4}, rng, 0.05);
    auto row = random_tensor({4}, rng, 0.05);
    auto w = random_tensor({4, 5}, rng);
    auto weights = random_tensor({3, 3, 2, 3}, rng);
    auto bias = random_tensor({3}, rng);
    auto img = random_tensor({5, 4, 2}, rng);
    auto pos = ops::add_scalar(ops::scale(random_tensor({3, 4}, rng, 0.0, false), 0.4), 0.5);
    pos.set_requires_grad(true);
    // Fixed weighting so each check has a non-trivial upstream gradient.
    auto mix = random_tensor({3, 4}, rng, 0.0, false);
    auto weigh = [&](const Tensor& t) { return ops::sum(ops::mul(t, mix)); };

    EXPECT_LT(gradient_check([&] { return weigh(ops::add(a, b)); }, {a, b}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::sub(a, b)); }, {a, b}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::mul(a, b)); }, {a, b}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::scale(a, -1.7)); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::add_scalar(a, 0.3)); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::add_rowvec(a, row)); }, {a, row}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::mul_rowvec(a, row)); }, {a, row}), kGradTol);
    EXPECT_LT(gradient_check([&] { return ops::sum(ops::mul(ops::matmul(a, w), ops::matmul(b, w))); }, {a, b, w}),
              kGradTol);
    EXPECT_LT(gradient_check([&] { return ops::sum(ops::mul(ops::transpose(a), ops::transpose(b))); }, {a, b}),
              kGradTol);
    EXPECT_LT(gradient_check(
                  [&] {
                    auto y = ops::conv2d(img, weights, bias);
                    return ops::sum(ops::mul(y, y));
                  },
                  {img, weights, bias}),
              kGradTol);
    EXPECT_LT(gradient_check(
                  [&] {
                    auto y = ops::conv2d(img, weights, bias, 2);
                    return ops::sum(ops::mul(y, y));
                  },
                  {img, weights, bias}),
              kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::relu(a)); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::sigmoid(a)); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::abs(a)); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::log(pos)); }, {pos}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::softmax_rows(ops::scale(a, 2.0))); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::layer_norm_rows(a)); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return ops::mean(ops::mul(a, a)); }, {a}), kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::reshape(ops::reshape(a, {12}), {3, 4})); }, {a}), kGradTol);
    EXPECT_LT(gradient_check(
                  [&] {
                    std::vector<Tensor> parts{ops::slice_cols(a, 2, 2), ops::slice_cols(b, 0, 2)};
                    return weigh(ops::concat_cols(parts));
                  },
                  {a, b}),
              kGradTol);
    EXPECT_LT(gradient_check(
                  [&] {
                    std::vector<std::size_t> rows{2, 0, 2};
                    auto s = ops::select_rows(a, rows);
                    return ops::sum(ops::mul(s, s));
                  },
                  {a}),
              kGradTol);
    EXPECT_LT(gradient_check(
                  [&] {
                    std::vector<double> t{1, 0, 0, 1, 1, 0, 1, 0, 0, 0, 1, 1};
                    return ops::binary_cross_entropy(pos, t);
                  },
                  {pos}),
              kGradTol);
    EXPECT_LT(gradient_check([&] { return weigh(ops::attention(a, b, ops::mul(a, b))); }, {a, b}), kGradTol);
  }
}

// Random 3-layer composite, every parameter against finite differences.
TEST(GradientSuite, ThreeLayerComposite) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(500 + seed);
    auto x = random_tensor({6, 5}, rng, 0.0, false);
    auto w1 = random_tensor({5, 8}, rng);
    auto b1 = random_tensor({8}, rng);
    auto w2 = random_tensor({8, 8}, rng);
    auto w3 = random_tensor({8, 1}, rng);
    auto f = [&] {
      auto h1 = ops::relu(ops::add_rowvec(ops::matmul(x, w1), b1));
      auto h2 = ops::layer_norm_rows(ops::matmul(h1, w2));
      return ops::mean(ops::sigmoid(ops::matmul(h2, w3)));
    };
    EXPECT_LT(gradient_check(f, {w1, b1, w2, w3}), kGradTol) << "seed " << seed;
  }
}

TEST(TensorTest, ForwardIsDeterministic) {
  std::mt19937_64 rng(9);
  auto a = random_tensor({4, 6}, rng);
  auto w = random_tensor({3, 3, 1, 2}, rng);
  auto img = random_tensor({6, 6, 1}, rng);
  auto f = [&] { return values(ops::softmax_rows(ops::matmul(a, ops::reshape(ops::conv2d(img, w), {6, 12})))); };
  EXPECT_EQ(f(), f());
}
