#include <gtest/gtest.h>

#include <cmath>

#include "tpap/autodiff.hpp"
#include "tpap/error.hpp"
#include "tpap/ops.hpp"
#include "tpap/rng.hpp"
#include "tpap/tensor.hpp"

using namespace tpap;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  EXPECT_NO_THROW(Tensor(Shape{0, 3}));  // empty batch
  Tensor t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t[5], 1.5f);
}

TEST(Tensor, SliceAndConcatRoundTrip) {
  const Tensor t = random_tensor({5, 2, 3}, 1);
  const Tensor parts[] = {slice_rows(t, 0, 2), slice_rows(t, 2, 5)};
  EXPECT_TRUE(concat_rows(parts).bit_equal(t));
  EXPECT_THROW(slice_rows(t, 3, 6), ShapeError);
}

TEST(Tensor, ChecksumSeesEveryBit) {
  Tensor a = random_tensor({4, 4}, 2);
  const auto c = checksum(a);
  a[7] = std::nextafter(a[7], 2.0f);
  EXPECT_NE(checksum(a), c);
  EXPECT_NE(checksum(a.reshaped({16})), checksum(a));
}

TEST(Ops, AddElementwise) {
  Graph g;
  Var r = ops::add(g.leaf(Tensor::from({1, 2})), g.leaf(Tensor::from({3, 4})));
  EXPECT_TRUE(r.value().bit_equal(Tensor::from({4, 6})));
}

TEST(Ops, MatmulIdentity) {
  const Tensor a = random_tensor({3, 3}, 3);
  Tensor eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0f;
  Graph g;
  EXPECT_TRUE(ops::matmul(g.leaf(eye), g.leaf(a)).value().bit_equal(a));
}

TEST(Ops, ConvOfOnesSumsWindow) {
  Graph g;
  Var y = ops::conv2d(g.leaf(Tensor(Shape{1, 1, 3, 3}, 1.0f)), g.leaf(Tensor(Shape{1, 1, 2, 2}, 1.0f)), std::nullopt, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y.value().data()) EXPECT_EQ(v, 4.0f);
}

TEST(Ops, ConvPaddingKeepsSize) {
  Graph g;
  Var y = ops::conv2d(g.leaf(Tensor(Shape{2, 3, 5, 5}, 1.0f)), g.leaf(Tensor(Shape{4, 3, 3, 3}, 1.0f)),
                      g.leaf(Tensor(Shape{4}, 0.5f)), 1);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 5, 5}));
  EXPECT_EQ(y.value()[0], 3.0f * 4.0f + 0.5f);        // corner sees a 2x2 patch per channel
  EXPECT_EQ(y.value()[2 * 5 + 2], 27.0f + 0.5f);      // interior sees the full kernel
}

TEST(Ops, ShapeErrorsNameTheOp) {
  Graph g;
  try {
    ops::add(g.leaf(Tensor(Shape{2})), g.leaf(Tensor(Shape{3})));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2]"), std::string::npos);
  }
  EXPECT_THROW(ops::matmul(g.leaf(Tensor(Shape{2, 3})), g.leaf(Tensor(Shape{2, 3}))), ShapeError);
  EXPECT_THROW(ops::conv2d(g.leaf(Tensor(Shape{1, 2, 4, 4})), g.leaf(Tensor(Shape{1, 3, 3, 3})), std::nullopt, 0),
               ShapeError);
  EXPECT_THROW(ops::reshape(g.leaf(Tensor(Shape{2, 3})), Shape{4}), ShapeError);
}

TEST(Ops, MaxPoolAndPad) {
  Graph g;
  Var x = g.leaf(Tensor(Shape{1, 1, 2, 2}, std::vector<float>{1, 5, 3, 2}));
  EXPECT_EQ(ops::max_pool2d(x, 2).value()[0], 5.0f);
  Var p = ops::pad2d(x, 1);
  ASSERT_EQ(p.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(p.value()[0], 0.0f);
  EXPECT_EQ(p.value()[5], 1.0f);
}

TEST(Autodiff, QuadraticGradient) {
  Graph g;
  Var x = g.leaf(Tensor::from({1, 2, 3}), "x", true);
  const GradMap grads = g.backward(ops::sum(ops::mul(x, x)));
  EXPECT_TRUE(grads.at("x").bit_equal(Tensor::from({2, 4, 6})));
}

TEST(Autodiff, DeadReluHasZeroGradient) {
  Graph g;
  Var x = g.leaf(Tensor::from({-5}), "x", true);
  EXPECT_EQ(g.backward(ops::sum(ops::relu(x))).at("x")[0], 0.0f);
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
  Graph g;
  Var x = g.leaf(Tensor::from({0.0f, 1.0f}), "x", true);
  const Tensor gx = g.backward(ops::sum(ops::relu(x))).at("x");
  EXPECT_EQ(gx[0], 0.0f);
  EXPECT_EQ(gx[1], 1.0f);
}

TEST(Autodiff, ReusedInputAccumulates) {
  Graph g;
  Var x = g.leaf(Tensor::from({3}), "x", true);
  // loss = x + 2x + x*x  ->  d/dx = 3 + 2x = 9
  Var loss = ops::sum(ops::add(ops::add(x, ops::scale(x, 2.0f)), ops::mul(x, x)));
  EXPECT_EQ(g.backward(loss).at("x")[0], 9.0f);
}

TEST(Autodiff, SecondBackwardRejected) {
  Graph g;
  Var x = g.leaf(Tensor::from({1, 2}), "x", true);
  Var loss = ops::sum(x);
  g.backward(loss);
  EXPECT_TRUE(g.consumed());
  EXPECT_THROW(g.backward(loss), GraphError);
}

TEST(Autodiff, NonScalarLossRejected) {
  Graph g;
  Var x = g.leaf(Tensor::from({1, 2}), "x", true);
  EXPECT_THROW(g.backward(ops::scale(x, 2.0f)), GraphError);
}

TEST(Autodiff, UnreachedLeafGetsZeros) {
  Graph g;
  Var x = g.leaf(Tensor::from({1, 2}), "x", true);
  g.leaf(Tensor::from({7, 7, 7}), "unused", true);
  const GradMap grads = g.backward(ops::sum(x));
  EXPECT_TRUE(grads.at("unused").bit_equal(Tensor(Shape{3}, 0.0f)));
}

TEST(Autodiff, LinearityOfBackward) {
  const Tensor xv = random_tensor({4, 5}, 11);
  const Tensor wv = random_tensor({3, 5}, 12);
  auto grad_of = [&](float a, float b) {
    Graph g;
    Var x = g.leaf(xv, "x", true);
    Var w = g.leaf(wv, "w", true);
    Var h = ops::linear(x, w);
    Var l1 = ops::sum(ops::relu(h));
    Var l2 = ops::sum(ops::mul(h, h));
    return g.backward(ops::add(ops::scale(l1, a), ops::scale(l2, b)));
  };
  const GradMap g1 = grad_of(1.0f, 0.0f), g2 = grad_of(0.0f, 1.0f), gc = grad_of(0.75f, -1.25f);
  for (const char* name : {"x", "w"}) {
    const Tensor& c = gc.at(name);
    for (std::size_t i = 0; i < c.numel(); ++i) {
      const double expect = 0.75 * g1.at(name)[i] - 1.25 * g2.at(name)[i];
      EXPECT_NEAR(c[i], expect, 1e-5 * std::max(1.0, std::fabs(expect))) << name << "[" << i << "]";
    }
  }
}

TEST(Autodiff, ConvBackwardMatchesFiniteDifferences) {
  const Tensor xv = random_tensor({2, 2, 4, 4}, 21);
  const Tensor wv = random_tensor({3, 2, 3, 3}, 22);
  auto loss = [](const Tensor& x, const Tensor& w) {
    Graph g;
    double s = 0.0;
    for (float v : ops::conv2d(g.leaf(x), g.leaf(w), std::nullopt, 1).value().data()) s += double(v) * v;
    return s;
  };
  Graph g;
  Var x = g.leaf(xv, "x", true);
  Var w = g.leaf(wv, "w", true);
  Var y = ops::conv2d(x, w, std::nullopt, 1);
  const GradMap grads = g.backward(ops::sum(ops::mul(y, y)));
  const Tensor nx = finite_diff_grad([&](const Tensor& p) { return loss(p, wv); }, xv, 1e-2f);
  const Tensor nw = finite_diff_grad([&](const Tensor& p) { return loss(xv, p); }, wv, 1e-2f);
  // Quadratic in x and in w: central differences are exact up to f32 noise.
  for (std::size_t i = 0; i < nx.numel(); ++i) EXPECT_NEAR(grads.at("x")[i], nx[i], 2e-2) << i;
  for (std::size_t i = 0; i < nw.numel(); ++i) EXPECT_NEAR(grads.at("w")[i], nw[i], 2e-2) << i;
}

TEST(Autodiff, DeterministicBits) {
  auto run = [] {
    Graph g;
    Var x = g.leaf(random_tensor({8, 16}, 5), "x", true);
    Var w = g.leaf(random_tensor({4, 16}, 6), "w", true);
    return g.backward(ops::sum(ops::relu(ops::linear(x, w))));
  };
  const GradMap a = run(), b = run();
  EXPECT_TRUE(a.at("x").bit_equal(b.at("x")));
  EXPECT_TRUE(a.at("w").bit_equal(b.at("w")));
}

TEST(FiniteDiff, SumGivesOnes) {
  const Tensor x = random_tensor({3, 4}, 9);
  const Tensor g = finite_diff_grad(
      [](const Tensor& t) {
        double s = 0.0;
        for (float v : t.data()) s += v;
        return s;
      },
      x, 1e-3f);
  for (float v : g.data()) EXPECT_NEAR(v, 1.0f, 1e-6);
}

TEST(FiniteDiff, SquareAtThree) {
  const Tensor g = finite_diff_grad([](const Tensor& t) { return static_cast<double>(t[0]) * t[0]; },
                                    Tensor::from({3.0f}), 1e-3f);
  EXPECT_NEAR(g[0], 6.0f, 1e-4);
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_grad([](const Tensor&) { return 0.0; }, Tensor::from({1}), 0.0f), Error);
}
