#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "annofuse/earl_loss.hpp"
#include "oracles.hpp"

namespace annofuse {
namespace {

LossInputs example_inputs() {
  LossInputs in;
  in.class_probs = {0.7, 0.3};
  in.true_class = 0;
  in.predicted_offsets = {0.5, 0.0, 0.0, 0.0};
  in.target_offsets = {0.0, 0.0, 0.0, 0.0};
  in.anchor_gt_iou = 0.8;
  in.beta = 1.0;
  in.eta = 0.5;
  return in;
}

TEST(ObjectnessIndicator, StrictThreshold) {
  EXPECT_EQ(objectness_indicator(0.7, 0.5), 1);
  EXPECT_EQ(objectness_indicator(0.5, 0.5), 0);
  EXPECT_EQ(objectness_indicator(0.0, 0.5), 0);
}

TEST(BaseLoss, PerfectPredictionIsZero) {
  LossInputs in;
  in.class_probs = {0.0, 1.0, 0.0};
  in.true_class = 1;
  in.predicted_offsets = in.target_offsets = {0.1, -0.2, 0.3, 0.4};
  in.anchor_gt_iou = 0.9;
  EXPECT_EQ(base_loss(in), 0.0);
}

TEST(BaseLoss, Examples) {
  // -ln 0.7 + 0.5 * 0.5^2, computed independently.
  const double ce = -std::log(0.7);
  EXPECT_NEAR(base_loss(example_inputs()), ce + 0.125, 1e-15);
  EXPECT_NEAR(base_loss(example_inputs()), 0.481675, 1e-6);

  LossInputs gated = example_inputs();
  gated.anchor_gt_iou = 0.5;
  EXPECT_NEAR(base_loss(gated), 0.356675, 1e-6);
  EXPECT_EQ(base_loss(gated), ce);
}

TEST(BaseLoss, SmoothL1Branches) {
  EXPECT_DOUBLE_EQ(SmoothL1::term(0.5), 0.125);
  EXPECT_DOUBLE_EQ(SmoothL1::term(-0.5), 0.125);
  EXPECT_DOUBLE_EQ(SmoothL1::term(2.0), 1.5);
  EXPECT_DOUBLE_EQ(SmoothL1::term(-3.0), 2.5);
  EXPECT_DOUBLE_EQ(SmoothL1::term(1.0), 0.5);
}

TEST(BaseLoss, ProbabilityFloorKeepsLossFinite) {
  LossInputs in = example_inputs();
  in.class_probs = {0.0, 1.0};
  const double l = base_loss(in);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -std::log(1e-12) + 0.125, 1e-9);
}

TEST(BaseLoss, PluggableTerms) {
  struct Constant {
    double value;
    double operator()(std::span<const double>, std::size_t) const { return value; }
  };
  struct L2 {
    double operator()(const BoxOffsets& a, const BoxOffsets& b) const {
      double s = 0;
      for (int i = 0; i < 4; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return s;
    }
  };
  LossInputs in = example_inputs();
  in.beta = 2.0;
  EXPECT_DOUBLE_EQ(base_loss(in, Constant{1.0}, L2{}), 1.0 + 2.0 * 0.25);
  in.confidence = 0.5;
  EXPECT_DOUBLE_EQ(earl_loss(in, Constant{1.0}, L2{}), 0.75);
}

TEST(BaseLoss, Validation) {
  auto with = [](auto mutate) {
    LossInputs in = example_inputs();
    mutate(in);
    return in;
  };
  EXPECT_THROW(base_loss(with([](LossInputs& in) { in.class_probs = {0.5, 0.6}; })), ValidationError);
  EXPECT_THROW(base_loss(with([](LossInputs& in) { in.class_probs = {1.2, -0.2}; })), ValidationError);
  EXPECT_THROW(base_loss(with([](LossInputs& in) { in.true_class = 2; })), ValidationError);
  EXPECT_THROW(base_loss(with([](LossInputs& in) { in.beta = 0.0; })), ValidationError);
  EXPECT_THROW(base_loss(with([](LossInputs& in) { in.eta = 1.0; })), ValidationError);
  EXPECT_THROW(base_loss(with([](LossInputs& in) { in.confidence = 0.0; })), ValidationError);
  EXPECT_THROW(base_loss(with([](LossInputs& in) { in.anchor_gt_iou = 1.5; })), ValidationError);
}

TEST(EarlLoss, Examples) {
  LossInputs in = example_inputs();
  in.confidence = 1.0;
  EXPECT_EQ(earl_loss(in), base_loss(in));
  in.confidence = 2.0 / 3.0;
  EXPECT_NEAR(earl_loss(in), 0.321117, 1e-6);
  EXPECT_NEAR(earl_loss(in), (2.0 / 3.0) * (-std::log(0.7) + 0.125), 1e-15);

  struct Three {
    double operator()(std::span<const double>, std::size_t) const { return 3.0; }
  };
  in.confidence = 0.5;
  in.anchor_gt_iou = 0.1;
  EXPECT_EQ(earl_loss(in, Three{}), 1.5);
}

LossInputs random_inputs(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> classes(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0), off(-3.0, 3.0), beta(0.1, 5.0), eta(0.05, 0.95),
      conf(1e-3, 1.0);
  LossInputs in;
  const int k = classes(rng);
  double sum = 0;
  for (int i = 0; i < k; ++i) sum += in.class_probs.emplace_back(u(rng) + 1e-3);
  for (double& p : in.class_probs) p /= sum;
  in.true_class = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
  for (int i = 0; i < 4; ++i) {
    in.predicted_offsets[i] = off(rng);
    in.target_offsets[i] = off(rng);
  }
  in.anchor_gt_iou = u(rng);
  in.beta = beta(rng);
  in.eta = eta(rng);
  in.confidence = conf(rng);
  return in;
}

TEST(EarlLoss, HomogeneousInConfidence) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    LossInputs in = random_inputs(rng);
    const double c = in.confidence;
    const double weighted = earl_loss(in);
    in.confidence = 1.0;
    ASSERT_NEAR(weighted, c * earl_loss(in), 1e-12 * std::max(1.0, weighted));
    ASSERT_GE(base_loss(in), 0.0);
  }
}

TEST(EarlLoss, GatedOffsetsDoNotMatter) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    LossInputs in = random_inputs(rng);
    in.anchor_gt_iou = in.eta;
    const double before = earl_loss(in);
    in.predicted_offsets = {9, -9, 4, 1};
    ASSERT_EQ(earl_loss(in), before);
  }
}

TEST(EarlLoss, ScalingKeepsMinimizer) {
  // Over a grid of candidate p[true], the minimizing candidate is the same for any c.
  for (double c : {0.1, 0.5, 1.0}) {
    double best = 1e9, arg = -1;
    for (int k = 1; k <= 99; ++k) {
      LossInputs in = example_inputs();
      in.class_probs = {k / 100.0, 1 - k / 100.0};
      in.confidence = c;
      const double l = earl_loss(in);
      if (l < best) best = l, arg = k;
    }
    EXPECT_EQ(arg, 99);
  }
}

TEST(CrossEntropy, DerivativeMatchesCentralDifference) {
  for (double p : {0.3, 0.7}) {
    const CrossEntropy ce;
    auto f = [&](double x) {
      const std::vector<double> probs{x, 1.0 - x};
      return ce(probs, 0);
    };
    const std::vector<double> probs{p, 1.0 - p};
    const double analytic = ce.derivative(probs, 0);
    const double numeric = oracle::central_difference(f, p, 1e-5);
    EXPECT_NEAR(numeric, analytic, 1e-6 * std::abs(analytic));
  }
}

TEST(ExportWeights, RowsFollowFusedBoxes) {
  SceneSet<FusedBox> fused{{"img_a", 64, 64, {{{10, 10, 50, 50}, 2, 0.8, 3, {"a", "b", "c"}}}},
                           {"img_b", 64, 64, {}}};
  const auto w = export_weights(fused);
  ASSERT_EQ(w.rows.size(), 1u);
  EXPECT_EQ(w.rows[0].image_id, "img_a");
  EXPECT_EQ(w.rows[0].category, 2);
  EXPECT_EQ(w.rows[0].weight, 0.8);
  EXPECT_TRUE(export_weights({}).rows.empty());

  fused[0].items[0].confidence = 3.0;
  EXPECT_THROW(export_weights(fused), ValidationError);
}

}  // namespace
}  // namespace annofuse
