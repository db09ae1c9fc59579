#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"

using namespace audex;
using namespace audex::testing;

namespace {

ExtraTreesParams trees(std::size_t n) {
  ExtraTreesParams hp;
  hp.n_trees = n;
  return hp;
}

}  // namespace

TEST(ExtraTrees, AllPositiveFitPredictsOne) {
  Matrix x(5, 2, std::vector<double>{0, 0, 1, 2, 3, 1, 4, 4, 2, 2});
  const std::vector<int> y(5, 1);
  ExtraTreesParams hp = trees(10);
  EXPECT_THROW(fit(x, y, hp, 1), ValidationError);
  hp.allow_single_class = true;
  const TreeEnsemble m = fit(x, y, hp, 1);
  for (double a : {-50.0, 0.0, 3.3, 80.0})
    for (double b : {-1.0, 2.0, 100.0}) EXPECT_EQ(predict_proba(m, std::vector<double>{a, b}).p1, 1.0);
  const DecisionGrid g = decision_grid(m, BoundingBox{{0, 0}, {4, 4}}, 7);
  EXPECT_TRUE(std::all_of(g.values.begin(), g.values.end(), [](double v) { return v == 1.0; }));
}

TEST(ExtraTrees, TwoPointsGiveSingleSplits) {
  Matrix x(2, 2, std::vector<double>{0, 0, 1, 3});
  const std::vector<int> y{0, 1};
  const TreeEnsemble m = fit(x, y, trees(25), 9);
  for (const Tree& t : m.trees) {
    EXPECT_EQ(t.nodes.size(), 3u);
    EXPECT_EQ(t.depth(), 2u);
    EXPECT_EQ(t.leaf_for(x.row(1)).class1_fraction, 1.0);
    EXPECT_EQ(t.leaf_for(x.row(0)).class1_fraction, 0.0);
  }
  EXPECT_EQ(predict_proba(m, x.row(1)).p1, 1.0);
  EXPECT_EQ(predict_proba(m, x.row(0)).p1, 0.0);
}

TEST(ExtraTrees, ThresholdsStrictlyInsideNodeRange) {
  const UserBase b = gaussian_clusters({{0, 0, 0}, {2, 2, 2}}, 60, 1.0, 4);
  std::vector<int> y(*b.labels);
  const TreeEnsemble m = fit(b.features, y, trees(5), 2);
  // Recompute each node's sample set and check its threshold.
  for (const Tree& t : m.trees) {
    std::vector<std::vector<std::size_t>> members(t.nodes.size());
    for (std::size_t r = 0; r < b.size(); ++r) {
      std::size_t i = 0;
      members[0].push_back(r);
      while (!t.nodes[i].is_leaf()) {
        const auto& n = t.nodes[i];
        i = static_cast<std::size_t>(b.features(r, static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left
                                                                                                        : n.right);
        members[i].push_back(r);
      }
    }
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      EXPECT_EQ(n.sample_count, members[i].size());
      if (n.is_leaf()) {
        std::size_t c1 = 0;
        for (auto r : members[i]) c1 += y[r];
        EXPECT_DOUBLE_EQ(n.class1_fraction, static_cast<double>(c1) / static_cast<double>(members[i].size()));
        continue;
      }
      double lo = 1e300, hi = -1e300;
      for (auto r : members[i]) {
        lo = std::min(lo, b.features(r, static_cast<std::size_t>(n.feature)));
        hi = std::max(hi, b.features(r, static_cast<std::size_t>(n.feature)));
      }
      EXPECT_GT(n.threshold, lo);
      EXPECT_LT(n.threshold, hi);
    }
  }
}

TEST(ExtraTrees, MixedDuplicateLeaf) {
  Matrix x(4, 1, 2.0);
  const std::vector<int> y{1, 1, 1, 0};
  const TreeEnsemble m = fit(x, y, trees(1), 3);
  ASSERT_EQ(m.trees[0].nodes.size(), 1u);
  const Posterior p = predict_proba(m, std::vector<double>{2.0});
  EXPECT_EQ(p.p1, 0.75);
  EXPECT_EQ(p.p0, 0.25);
}

TEST(ExtraTrees, LeafSmoothing) {
  Matrix x(4, 1, 2.0);
  const std::vector<int> y{1, 1, 1, 0};
  ExtraTreesParams hp = trees(1);
  hp.leaf_smoothing = 1.0;
  EXPECT_DOUBLE_EQ(predict_proba(fit(x, y, hp, 3), std::vector<double>{2.0}).p1, 4.0 / 6.0);
}

TEST(ExtraTrees, PredictClassTieGoesToPositive) {
  EXPECT_EQ(predict_class(Posterior::from_p1(0.75)), 1);
  EXPECT_EQ(predict_class(Posterior::from_p1(0.25)), 0);
  EXPECT_EQ(predict_class(Posterior::from_p1(0.5)), 1);
}

TEST(ExtraTrees, ClusterFixtureTrainingAccuracy) {
  const ClusterFixture fx = make_cluster_fixture(250, 250, 12);
  const Matrix x = fx.training_points();
  const std::vector<int> y = fx.training_labels();
  const TreeEnsemble m = fit(x, y, trees(100), 5);
  std::size_t right = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) right += predict_class(m, x.row(r)) == y[r];
  EXPECT_GE(static_cast<double>(right) / static_cast<double>(x.rows()), 0.95);

  // Centroid region outscores a far corner.
  double centre = 0.0, corner = 0.0;
  for (double dx : {-0.5, 0.0, 0.5})
    for (double dy : {-0.5, 0.0, 0.5}) {
      centre += predict_proba(m, std::vector<double>{2.0 + dx, -1.0 + dy}).p1;
      corner += predict_proba(m, std::vector<double>{-9.0 + dx, 9.0 + dy}).p1;
    }
  EXPECT_GT(centre, corner);
}

TEST(ExtraTrees, EnsembleMeanWithinTreeRange) {
  const ClusterFixture fx = make_cluster_fixture(100, 100, 2);
  const TreeEnsemble m = fit(fx.training_points(), fx.training_labels(), trees(30), 5);
  const Matrix probes = probe_lattice(fx.box, 20, 20);
  for (std::size_t r = 0; r < probes.rows(); ++r) {
    double lo = 1.0, hi = 0.0;
    for (const Tree& t : m.trees) {
      lo = std::min(lo, t.leaf_for(probes.row(r)).class1_fraction);
      hi = std::max(hi, t.leaf_for(probes.row(r)).class1_fraction);
    }
    const Posterior p = predict_proba(m, probes.row(r));
    EXPECT_GE(p.p1, lo);
    EXPECT_LE(p.p1, hi);
    EXPECT_EQ(p.p0 + p.p1, 1.0);
  }
}

TEST(ExtraTrees, PermutationInvariant) {
  const ClusterFixture fx = make_cluster_fixture(80, 80, 6);
  const Matrix x = fx.training_points();
  const std::vector<int> y = fx.training_labels();
  Rng rng = make_rng(3);
  const auto perm = sample_without_replacement(x.rows(), x.rows(), rng);
  Matrix xp(x.rows(), x.cols());
  std::vector<int> yp(y.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy(x.row(perm[r]).begin(), x.row(perm[r]).end(), xp.row(r).begin());
    yp[r] = y[perm[r]];
  }
  EXPECT_EQ(to_json(fit(x, y, trees(20), 4)), to_json(fit(xp, yp, trees(20), 4)));
}

TEST(ExtraTrees, ThreadCountDoesNotChangeModel) {
  const ClusterFixture fx = make_cluster_fixture(80, 80, 6);
  ExtraTreesParams one = trees(16), four = trees(16);
  four.threads = 4;
  const auto a = to_json(fit(fx.training_points(), fx.training_labels(), one, 8));
  const auto b = to_json(fit(fx.training_points(), fx.training_labels(), four, 8));
  EXPECT_EQ(a, b);
}

TEST(ExtraTrees, JsonRoundTrip) {
  const ClusterFixture fx = make_cluster_fixture(50, 50, 1);
  const TreeEnsemble m = fit(fx.training_points(), fx.training_labels(), trees(7), 2);
  const TreeEnsemble back = ensemble_from_json(nlohmann::json::parse(to_json(m).dump()));
  const Matrix probes = probe_lattice(fx.box, 15, 15);
  for (std::size_t r = 0; r < probes.rows(); ++r)
    EXPECT_EQ(predict_proba(m, probes.row(r)).p1, predict_proba(back, probes.row(r)).p1);
  EXPECT_THROW(ensemble_from_json(nlohmann::json{{"format", "other"}}), FormatError);
}

TEST(ExtraTrees, InputValidation) {
  Matrix x(2, 2, std::vector<double>{0, 0, 1, 1});
  EXPECT_THROW(fit(x, std::vector<int>{0, 2}, trees(1), 1), ValidationError);
  EXPECT_THROW(fit(x, std::vector<int>{0}, trees(1), 1), DimensionError);
  EXPECT_THROW(fit(x, std::vector<int>{0, 1}, trees(0), 1), ConfigError);
  const TreeEnsemble m = fit(x, std::vector<int>{0, 1}, trees(1), 1);
  EXPECT_THROW(predict_proba(m, std::vector<double>{1.0}), DimensionError);
}

TEST(DecisionGrid, LatticeAndCsv) {
  const ClusterFixture fx = make_cluster_fixture(50, 50, 1);
  const TreeEnsemble m = fit(fx.training_points(), fx.training_labels(), trees(5), 2);
  const DecisionGrid g = decision_grid(m, fx.box, 4);
  EXPECT_EQ(g.values.size(), 16u);
  EXPECT_EQ(g.xs.size(), 4u);
  EXPECT_GE(g.xs.front(), fx.box.low[0]);
  EXPECT_LE(g.xs.back(), fx.box.high[0]);
  const std::string csv = format_grid_csv(g);
  EXPECT_EQ(csv.rfind("row,col,x,y,p1\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);
}
