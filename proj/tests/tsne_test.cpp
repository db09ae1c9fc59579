#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"

using namespace audex;
using namespace audex::testing;

namespace {

Matrix three_clusters_r10(std::uint64_t seed = 3) {
  std::vector<std::vector<double>> centers(3, std::vector<double>(10, 0.0));
  centers[1][0] = 20.0;
  centers[2][1] = 20.0;
  return gaussian_clusters(centers, 50, 1.0, seed).features;
}

}  // namespace

TEST(ConditionalAffinities, EquilateralTriangleIsUniform) {
  Matrix x(3, 2, std::vector<double>{0.0, 0.0, 1.0, 0.0, 0.5, std::sqrt(3.0) / 2.0});
  const Matrix p = conditional_affinities(x, 2.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p(i, j), i == j ? 0.0 : 0.5, 1e-12);
}

TEST(ConditionalAffinities, RowsHitTargetPerplexity) {
  const Matrix x = three_clusters_r10();
  for (double perp : {5.0, 30.0}) {
    const Matrix p = conditional_affinities(x, perp);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      EXPECT_NEAR(row_perplexity(p.row(i)), perp, kPerplexityTolerance) << "row " << i;
      EXPECT_NEAR(std::accumulate(p.row(i).begin(), p.row(i).end(), 0.0), 1.0, 1e-12);
      EXPECT_EQ(p(i, i), 0.0);
    }
  }
}

TEST(ConditionalAffinities, FarClustersBarelyInteract) {
  const Matrix x = three_clusters_r10();
  const Matrix p = conditional_affinities(x, 5.0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double cross = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j)
      if (i / 50 != j / 50) cross += p(i, j);
    EXPECT_LT(cross, 1e-6);
  }
}

TEST(ConditionalAffinities, DuplicatePointsAreDegenerate) {
  Matrix x(3, 2, 1.0);
  EXPECT_THROW(conditional_affinities(x, 1.5), DegenerateError);
}

TEST(Symmetrize, SymmetricInputIsScaledByN) {
  // Cycle on 4 nodes: rows already symmetric and stochastic.
  Matrix c(4, 4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    c(i, (i + 1) % 4) = 0.5;
    c(i, (i + 3) % 4) = 0.5;
  }
  const Matrix p = symmetrize(c);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j && c(i, j) > 0) {
        EXPECT_NEAR(p(i, j), c(i, j) / 4.0, 1e-12);
      }
}

TEST(Symmetrize, SumsToOneAndIsSymmetric) {
  const Matrix p = symmetrize(conditional_affinities(three_clusters_r10(), 10.0));
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      total += p(i, j);
      EXPECT_EQ(p(i, j), p(j, i));
      if (i != j) {
        EXPECT_GE(p(i, j), kAffinityFloor * 0.5);
      }
    }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(KlDivergence, ZeroWhenQMatchesP) {
  Matrix y(5, 2, std::vector<double>{0, 0, 1, 0, 0, 2, 3, 1, -1, 4});
  // Build P as the Student-t affinities of y itself.
  Matrix p(5, 5, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i != j) z += p(i, j) = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
  for (double& v : p.data()) v /= z;
  EXPECT_NEAR(kl_divergence(p, y), 0.0, 1e-9);
}

TEST(KlDivergence, TranslationInvariantAndNonNegative) {
  const Matrix p = symmetrize(conditional_affinities(three_clusters_r10(), 10.0));
  Rng rng = make_rng(1);
  Matrix y(150, 2);
  for (double& v : y.data()) v = standard_normal(rng);
  Matrix shifted = y;
  for (std::size_t r = 0; r < 150; ++r) shifted(r, 0) += 100.0;
  const double a = kl_divergence(p, y);
  EXPECT_GE(a, 0.0);
  EXPECT_NEAR(a, kl_divergence(p, shifted), 1e-9);
}

TEST(RunTsne, ThreeClustersArePreserved) {
  const Matrix x = three_clusters_r10();
  TsneConfig cfg;
  cfg.rng_seed = 17;
  const Embedding e = run_tsne(x, cfg);
  ASSERT_EQ(e.size(), 150u);
  ASSERT_EQ(e.dim(), 2u);
  EXPECT_LT(e.meta.final_kl, e.meta.initial_kl);
  for (double v : e.coords.data()) EXPECT_TRUE(std::isfinite(v));

  // Every embedded 10-NN list stays inside its own cluster.
  for (std::size_t i = 0; i < 150; ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < 150; ++j)
      if (j != i) d.emplace_back(squared_distance(e.coords.row(i), e.coords.row(j)), j);
    std::partial_sort(d.begin(), d.begin() + 10, d.end());
    for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(d[t].second / 50, i / 50);
  }
  // Within an isotropic 10-D blob the neighbour order is mostly noise; chance
  // is 10/49. scikit-learn's exact t-SNE scores 0.54 on this fixture.
  EXPECT_GE(neighborhood_preservation(x, e.coords, 10), 0.5);
}

TEST(RunTsne, SameSeedIsBitIdentical) {
  const Matrix x = three_clusters_r10(9);
  TsneConfig cfg;
  cfg.iterations = 300;
  cfg.rng_seed = 5;
  const Embedding a = run_tsne(x, cfg);
  const Embedding b = run_tsne(x, cfg);
  EXPECT_EQ(a.coords, b.coords);
  cfg.threads = 3;
  EXPECT_EQ(run_tsne(x, cfg).coords, a.coords);
}

TEST(RunTsne, RejectsBadConfig) {
  const Matrix x = three_clusters_r10();
  TsneConfig cfg;
  cfg.perplexity = 150.0;
  EXPECT_THROW(run_tsne(x, cfg), ConfigError);
  cfg.perplexity = 30.0;
  cfg.iterations = 100;
  EXPECT_THROW(run_tsne(x, cfg), ConfigError);
}

TEST(RunTsne, DivergenceIsReported) {
  TsneConfig cfg;
  cfg.learning_rate = 1e308;
  cfg.iterations = 250;
  cfg.perplexity = 5.0;
  EXPECT_THROW(run_tsne(three_clusters_r10(), cfg), DivergenceError);
}

TEST(NeighborhoodPreservation, IdentityEmbeddingIsOne) {
  const Matrix x = three_clusters_r10();
  EXPECT_DOUBLE_EQ(neighborhood_preservation(x, x, 10), 1.0);
}

TEST(NeighborhoodPreservation, RandomPermutationIsChanceLevel) {
  const Matrix x = three_clusters_r10();
  const std::size_t n = x.rows(), k = 10;
  Rng rng = make_rng(99);
  double total = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const auto perm = sample_without_replacement(n, n, rng);
    Matrix y(n, x.cols());
    for (std::size_t r = 0; r < n; ++r)
      std::copy(x.row(perm[r]).begin(), x.row(perm[r]).end(), y.row(r).begin());
    total += neighborhood_preservation(x, y, k);
  }
  const double expected = static_cast<double>(k) / static_cast<double>(n - 1);
  EXPECT_NEAR(total / trials, expected, 0.01);
}

TEST(TsneMeta, SidecarIsKeyValue) {
  TsneMeta m;
  m.perplexity = 30;
  m.iterations = 1000;
  m.rng_seed = 4;
  const std::string s = format_tsne_meta(m);
  EXPECT_NE(s.find("perplexity=30"), std::string::npos);
  EXPECT_NE(s.find("iterations=1000"), std::string::npos);
  EXPECT_NE(s.find("rng_seed=4"), std::string::npos);
}
