#include <gtest/gtest.h>

#include <cmath>

#include "pinview/metrics.hpp"

using namespace pinview;

TEST(AveragePrecision, HandComputedToyOrdering) {
  // Relevant at ranks 1, 3, 6 of 15: (1/1 + 2/3 + 3/6) / 3.
  std::vector<bool> r(15, false);
  r[0] = r[2] = r[5] = true;
  EXPECT_NEAR(average_precision(r), (1.0 + 2.0 / 3.0 + 0.5) / 3.0, 1e-15);
}

TEST(AveragePrecision, AllRelevantFirstIsOne) {
  std::vector<bool> r{true, true, true, false, false};
  EXPECT_DOUBLE_EQ(average_precision(r), 1.0);
}

TEST(AveragePrecision, NothingRelevantIsZero) {
  EXPECT_DOUBLE_EQ(average_precision(std::vector<bool>(10, false)), 0.0);
  EXPECT_DOUBLE_EQ(average_precision(std::vector<bool>{}), 0.0);
}

TEST(RocAuc, PerfectAndReversedAndTies) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(roc_auc(s, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(s, std::vector<int>{1, 1, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}), 0.5);
  EXPECT_THROW(roc_auc(s, std::vector<int>{1, 1, 1, 1}), InvalidArgument);
}

TEST(PairedTTest, IdenticalVectorsGivePOne) {
  const std::vector<double> a{0.1, 0.4, 0.3};
  const auto r = paired_ttest(a, a);
  EXPECT_DOUBLE_EQ(r.p, 1.0);
  EXPECT_FALSE(r.degenerate);
}

TEST(PairedTTest, ConstantNonzeroDifferenceIsDegenerate) {
  const auto r = paired_ttest(std::vector<double>{2, 3, 4}, std::vector<double>{1, 2, 3});
  EXPECT_TRUE(r.degenerate);
}

TEST(PairedTTest, TextbookFixture) {
  // Differences 1..5: mean 3, sd sqrt(2.5), t = 3 / sqrt(0.5) = 3 sqrt 2.
  const std::vector<double> a{2, 4, 6, 8, 10}, b{1, 2, 3, 4, 5};
  const auto r = paired_ttest(a, b);
  EXPECT_NEAR(r.t, 3.0 * std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(r.df, 4.0);
  // Student t with 4 df has the closed-form cdf 1/2 + (3/4)(x - x^3/3),
  // x = t / sqrt(t^2 + 4).
  const double x = r.t / std::sqrt(r.t * r.t + 4.0);
  const double p_closed = 2.0 * (1.0 - (0.5 + 0.75 * (x - x * x * x / 3.0)));
  EXPECT_NEAR(r.p, p_closed, 1e-12);
  EXPECT_NEAR(r.p, 0.0132356, 1e-6);
}

TEST(PairedTTest, ShiftWithTinyNoiseIsHighlySignificant) {
  Rng rng(5);
  std::vector<double> a(40), b(40);
  for (std::size_t i = 0; i < 40; ++i) {
    b[i] = uniform01(rng);
    a[i] = b[i] + 1.0 + 1e-6 * standard_normal(rng);
  }
  EXPECT_LT(paired_ttest(a, b).p, 1e-10);
}

TEST(PairedTTest, RejectsBadInput) {
  EXPECT_THROW(paired_ttest(std::vector<double>{1}, std::vector<double>{1}), InvalidArgument);
  EXPECT_THROW(paired_ttest(std::vector<double>{1, 2}, std::vector<double>{1}), DimensionMismatch);
}
