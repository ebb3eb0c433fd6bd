#include <gtest/gtest.h>

#include <cmath>
#include <type_traits>

#include "fixtures.hpp"
#include "properties.hpp"
#include "tpap/error.hpp"
#include "tpap/purify.hpp"

using namespace tpap;
using tpap::testing::uniform_tensor;

// Ground-truth labels cannot be passed to the purification entry points in any
// argument position.
template <class... A>
concept purify_callable = requires(A&&... a) { purify_batch(std::forward<A>(a)...); };
template <class... A>
concept predict_callable = requires(A&&... a) { tpap_predict(std::forward<A>(a)...); };

static_assert(purify_callable<const Model&, const Tensor&, const PurifierSpec&>);
static_assert(!purify_callable<const Model&, const Tensor&, const Labels&, const PurifierSpec&>);
static_assert(!purify_callable<const Model&, const Tensor&, const PurifierSpec&, const Labels&>);
static_assert(!purify_callable<const Model&, const Tensor&, std::span<const Label>, const PurifierSpec&>);
static_assert(predict_callable<const Model&, const Tensor&, const PurifierSpec&>);
static_assert(!predict_callable<const Model&, const Tensor&, const Labels&, const PurifierSpec&>);
static_assert(!predict_callable<const Model&, const Tensor&, const PurifierSpec&, const Labels&>);
static_assert(!std::is_constructible_v<PurifierSpec, float, float, float, float, Labels>);

TEST(PurifyInterface, LabelsAreNotAParameter) {
  // The static_asserts above are the actual check; this records it in the
  // test report.
  EXPECT_FALSE((purify_callable<const Model&, const Tensor&, const Labels&, const PurifierSpec&>));
  EXPECT_FALSE((predict_callable<const Model&, const Tensor&, const Labels&, const PurifierSpec&>));
}

TEST(PurifierSpec, Validation) {
  EXPECT_NO_THROW(PurifierSpec::radius(8.0f / 255.0f).validate());
  EXPECT_NO_THROW(PurifierSpec::radius(0.0f).validate());
  PurifierSpec s = PurifierSpec::radius(0.1f);
  s.beta = 0.05f;
  try {
    s.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "purifier.beta");
  }
  EXPECT_THROW(PurifierSpec::radius(-0.1f).validate(), ValidationError);
  EXPECT_THROW(PurifierSpec::radius(1.5f).validate(), ValidationError);
}

TEST(Purify, ZeroRadiusIsThePlainPipeline) { EXPECT_EQ(tpap::testing::zero_radius_mismatches(10, 1), 0u); }

TEST(Purify, RadiusHoldsExactly) {
  const auto r = tpap::testing::purify_radius_property(100, 2);
  EXPECT_EQ(r.images, 2000u);
  EXPECT_EQ(r.violations, 0u);
}

TEST(Purify, TraceDeltasWithinRadius) {
  const Model m(small_cnn_architecture({3, 8, 8}, 4), 9);
  const Tensor x = uniform_tensor({10, 3, 8, 8}, 10);
  const PurifyTrace tr = purify_batch(m, x, PurifierSpec::radius(8.0f / 255.0f));
  ASSERT_EQ(tr.linf_delta.size(), 10u);
  for (float d : tr.linf_delta) EXPECT_LE(d, 8.0f / 255.0f);
  EXPECT_TRUE(tr.post_labels.empty());
}

TEST(Purify, MovesAwayFromThePrePredictedClass) {
  const Model m(linear_architecture({1, 1, 12}, 3), 3);
  const Tensor x = uniform_tensor({32, 1, 1, 12}, 4, 0.2f, 0.8f);
  const PurifyTrace tr = purify_batch(m, x, PurifierSpec::radius(0.05f));
  const float before = cross_entropy(forward_logits(m, x), tr.pre_labels);
  const float after = cross_entropy(forward_logits(m, tr.purified), tr.pre_labels);
  EXPECT_GT(after, before);
  // Interior pixels move by the full radius, less at most a pixel-scale ulp.
  for (float d : tr.linf_delta) EXPECT_NEAR(d, 0.05f, 1e-6);
}

TEST(Purify, DeterministicAndReadOnly) {
  const Model m(small_cnn_architecture({3, 8, 8}, 4), 5);
  const Tensor x = uniform_tensor({8, 3, 8, 8}, 6);
  const auto xs = checksum(x), ps = m.param_checksum();
  const TpapPrediction a = tpap_predict(m, x, PurifierSpec::radius(8.0f / 255.0f));
  const TpapPrediction b = tpap_predict(m, x, PurifierSpec::radius(8.0f / 255.0f));
  EXPECT_TRUE(a.trace.purified.bit_equal(b.trace.purified));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.labels, a.trace.post_labels);
  EXPECT_EQ(a.labels, predict_labels(forward_logits(m, a.trace.purified)));
  EXPECT_EQ(checksum(x), xs);
  EXPECT_EQ(m.param_checksum(), ps);
}

TEST(Purify, EmptyBatchAndShapeErrors) {
  const Model m(linear_architecture({1, 1, 4}, 2), 1);
  const TpapPrediction p = tpap_predict(m, Tensor(Shape{0, 1, 1, 4}), PurifierSpec::radius(0.1f));
  EXPECT_TRUE(p.labels.empty());
  EXPECT_THROW(purify_batch(m, Tensor(Shape{2, 1, 1, 5}), PurifierSpec::radius(0.1f)), ShapeError);
}
