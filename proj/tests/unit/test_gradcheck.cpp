#include <gtest/gtest.h>

#include <chrono>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "properties.hpp"

using namespace tpap;
using namespace tpap::testing;

// Central differences (h = 1e-3) of a double-precision reference forward
// against the library's f32 autodiff, for input and parameter gradients.
TEST(GradCheck, HundredsOfRandomModelInputPairs) {
  const auto t0 = std::chrono::steady_clock::now();
  const GradSuiteResult r = gradcheck_suite(60, 60, 1000);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  EXPECT_GE(r.pairs, 100u);
  EXPECT_EQ(r.failing_pairs, 0u);
  EXPECT_EQ(r.stats.failures, 0u) << "worst: " << r.stats.worst;
  EXPECT_LT(r.stats.max_rel, 1e-3);
  // Kinks are rare at these sizes; most coordinates must actually be checked.
  EXPECT_GT(r.stats.checked, 10 * (r.stats.skipped_kink + 1));
  EXPECT_LT(secs, 60.0);
  std::printf("gradcheck: %zu pairs, %zu coords checked, %zu kinks, %zu below floor, max rel %.3g, %.2fs\n", r.pairs,
              r.stats.checked, r.stats.skipped_kink, r.stats.skipped_small, r.stats.max_rel, secs);
}

TEST(GradCheck, DetectsABrokenGradient) {
  // Sanity of the checker itself: a perturbed analytic gradient must fail.
  const Model model(mlp_architecture({1, 2, 2}, {4}, 3), 5);
  const Tensor x = uniform_tensor({2, 1, 2, 2}, 6);
  const Labels y{0, 2};
  Tensor g = input_gradient(model, x, y);
  Tensor numeric = g;
  numeric[0] *= 1.01f;
  GradCheckStats s;
  compare("input", g, numeric, std::vector<bool>(g.numel(), false), 1e-3, 0.0, s);
  EXPECT_EQ(s.failures, 1u);
}
