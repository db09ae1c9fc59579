#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace audex;
using namespace audex::testing;

namespace {

UnivariateScenario uniform_regime(double n0 = 1.0, double n1 = 1.0) {
  return {NormalDensity{3.0, 1.0}, UniformDensity{-6.0, 12.0}, n0, n1};
}

}  // namespace

TEST(AnalyticPosterior, EqualDensitiesGiveHalf) {
  const UnivariateScenario s{NormalDensity{0.0, 1.0}, NormalDensity{0.0, 1.0}, 4.0, 4.0};
  for (double x : {-3.0, 0.0, 1.7}) EXPECT_DOUBLE_EQ(analytic_posterior(x, s), 0.5);
}

TEST(AnalyticPosterior, ZeroSeedDensity) {
  // f underflows far out while g is positive.
  EXPECT_EQ(bayes_posterior(0.0, 0.3, 1.0, 1.0), 0.0);
  EXPECT_EQ(bayes_posterior(0.3, 0.0, 1.0, 1.0), 1.0);
}

TEST(AnalyticPosterior, PeakValueAtMu1) {
  const double f = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double g = 1.0 / 18.0;
  EXPECT_NEAR(f, 0.398942, 1e-6);
  EXPECT_NEAR(g, 0.055556, 1e-6);
  const double p = analytic_posterior(3.0, uniform_regime());
  EXPECT_NEAR(p, f / (f + g), 1e-15);
  EXPECT_NEAR(p, 0.877765, 1e-6);
}

TEST(AnalyticPosterior, OutsideUniformSupport) {
  EXPECT_EQ(analytic_posterior(13.0, uniform_regime()), 1.0);
}

TEST(AnalyticPosterior, SumsToOneExactly) {
  for (const auto& s : {uniform_regime(), uniform_regime(2, 7),
                        UnivariateScenario{NormalDensity{3, 1}, NormalDensity{1, 2}, 3, 1}})
    for (double x = -10.0; x <= 15.0; x += 0.037)
      EXPECT_EQ(analytic_posterior(x, s) + analytic_posterior_class0(x, s), 1.0) << x;
}

TEST(AnalyticPosterior, DecreasesAwayFromMu1UnderUniform) {
  const auto s = uniform_regime();
  double prev = analytic_posterior(3.0, s);
  for (double x = 3.01; x < 11.9; x += 0.01) {
    const double p = analytic_posterior(x, s);
    EXPECT_LE(p, prev);
    prev = p;
  }
}

TEST(DecisionThresholds, UniformRegimeClosedForm) {
  const auto roots = decision_thresholds(uniform_regime());
  const double half = std::sqrt(2.0 * std::log(18.0 / std::sqrt(2.0 * std::numbers::pi)));
  ASSERT_EQ(roots.size(), 2u);
  EXPECT_NEAR(roots[0], 3.0 - half, 1e-6);
  EXPECT_NEAR(roots[1], 3.0 + half, 1e-6);
  EXPECT_NEAR(roots[0], 1.0143, 1e-4);
  EXPECT_NEAR(roots[1], 4.9857, 1e-4);
  const auto s = uniform_regime();
  for (double r : roots) EXPECT_LT(std::abs(s.n1 * s.f.pdf(r) - s.n0 * s.g_pdf(r)), 1e-9);
}

TEST(DecisionThresholds, NormalRegimeHasOneRootBetweenMeans) {
  const UnivariateScenario s{NormalDensity{3, 1}, NormalDensity{1, 1}, 1, 1};
  const auto roots = decision_thresholds(s);
  ASSERT_EQ(roots.size(), 1u);
  EXPECT_NEAR(roots[0], 2.0, 1e-8);
}

TEST(DecisionThresholds, ImbalanceWidensInterval) {
  const auto even = decision_thresholds(uniform_regime(1, 1));
  const auto skewed = decision_thresholds(uniform_regime(1, 3));
  ASSERT_EQ(even.size(), 2u);
  ASSERT_EQ(skewed.size(), 2u);
  EXPECT_LT(skewed[0], even[0]);
  EXPECT_GT(skewed[1], even[1]);
}

TEST(Kde, FarPointHasTinyPosterior) {
  Matrix centers(3, 2, std::vector<double>{0, 0, 1, 0, 0, 1});
  const KdeOracle o = make_kde_oracle(centers, BoundingBox{{-100, -100}, {100, 100}}, 1, 1);
  EXPECT_LT(kde_posterior(o, std::vector<double>{21.0 * o.bandwidth + 1.0, 0.0}), 1e-6);
}

TEST(Kde, CenterWithHugeBoxApproachesOne) {
  Matrix centers(2, 1, std::vector<double>{0.0, 0.0});
  KdeOracle o{centers, 0.5, BoundingBox{{-1e9}, {1e9}}, 1.0, 1.0};
  EXPECT_GT(kde_posterior(o, std::vector<double>{0.0}), 1.0 - 1e-8);
}

TEST(Kde, SilvermanBandwidth) {
  Matrix c(4, 1, std::vector<double>{1, 2, 3, 4});
  const double sd = std::sqrt(5.0 / 3.0);
  EXPECT_NEAR(silverman_bandwidth(c), 1.06 * sd * std::pow(4.0, -0.2), 1e-15);
  EXPECT_THROW(silverman_bandwidth(Matrix(3, 1, 2.0)), DegenerateError);
}

TEST(RankAgreement, KnownValues) {
  std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_DOUBLE_EQ(rank_agreement(a, a), 1.0);
  std::vector<double> rev(a.rbegin(), a.rend());
  EXPECT_DOUBLE_EQ(rank_agreement(a, rev), -1.0);
  std::vector<double> swapped = a;
  std::swap(swapped[4], swapped[5]);
  EXPECT_NEAR(rank_agreement(a, swapped), 1.0 - 6.0 * 2.0 / (10.0 * 99.0), 1e-12);
}

TEST(RankAgreement, AverageRanksForTies) {
  EXPECT_EQ(average_ranks(std::vector<double>{5, 1, 5, 3}), (std::vector<double>{3.5, 1, 3.5, 2}));
  EXPECT_THROW(rank_agreement(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), ValidationError);
  EXPECT_THROW(rank_agreement(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(ClusterFixture, Shape) {
  const ClusterFixture fx = make_cluster_fixture(250, 250, 1);
  EXPECT_EQ(fx.training_points().rows(), 500u);
  const auto y = fx.training_labels();
  EXPECT_EQ(std::count(y.begin(), y.end(), 1), 250);
  EXPECT_EQ(probe_lattice(fx.box, 50, 40).rows(), 2000u);
}
