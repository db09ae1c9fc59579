#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_support.hpp"

using namespace audex;
using namespace audex::testing;

TEST(Expand, TieBrokenById) {
  // a=1, b=2, c=3, d=4
  const std::vector<ScoredUser> scores{{3, 0.8}, {1, 0.9}, {4, 0.1}, {2, 0.8}};
  const ExpansionResult r = expand(scores, 2);
  EXPECT_EQ(r.audience, (std::vector<UserId>{1, 2}));
  EXPECT_FALSE(r.manifest.truncated);
}

TEST(Expand, WholePoolAndTruncation) {
  const std::vector<ScoredUser> scores{{3, 0.2}, {1, 0.9}, {2, 0.5}};
  EXPECT_EQ(expand(scores, 3).audience, (std::vector<UserId>{1, 2, 3}));
  const ExpansionResult r = expand(scores, 10);
  EXPECT_EQ(r.audience.size(), 3u);
  EXPECT_TRUE(r.manifest.truncated);
  EXPECT_EQ(r.manifest.requested_m, 10u);
  EXPECT_EQ(r.manifest.resolved_m, 3u);
  EXPECT_THROW(expand(scores, 0), ValidationError);
}

TEST(Expand, SeedIsExcluded) {
  const std::vector<ScoredUser> scores{{1, 0.9}, {2, 0.8}, {3, 0.7}};
  const ExpansionResult r = expand(scores, 2, SeedAudience{{1}, {}});
  EXPECT_EQ(r.audience, (std::vector<UserId>{2, 3}));
}

TEST(Expand, MatchesExhaustiveSubsetSearch) {
  Rng rng = make_rng(77);
  for (int list = 0; list < 50; ++list) {
    std::vector<ScoredUser> scores;
    for (UserId id = 0; id < 12; ++id)
      scores.push_back({id, static_cast<double>(uniform_index(rng, 6)) / 5.0});  // many ties
    for (std::size_t m = 1; m <= 5; ++m) {
      double best = -1.0;
      for (unsigned mask = 0; mask < (1u << 12); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != m) continue;
        double s = 0.0;
        for (int i = 0; i < 12; ++i)
          if (mask & (1u << i)) s += scores[static_cast<std::size_t>(i)].score;
        best = std::max(best, s);
      }
      double got = 0.0;
      for (UserId id : expand(scores, m).audience) got += scores[static_cast<std::size_t>(id)].score;
      EXPECT_NEAR(got, best, 1e-12);
    }
  }
}

TEST(Expand, AudiencesAreNested) {
  Rng rng = make_rng(5);
  std::vector<ScoredUser> scores;
  for (UserId id = 0; id < 40; ++id) scores.push_back({id, std::floor(uniform01(rng) * 8.0) / 8.0});
  std::vector<UserId> prev;
  for (std::size_t m = 1; m <= 40; ++m) {
    const auto a = expand(scores, m).audience;
    EXPECT_TRUE(std::equal(prev.begin(), prev.end(), a.begin()));
    prev = a;
  }
}

TEST(ScorePool, ExcludesSeedAndRejectsEmptyPool) {
  const ClusterFixture fx = make_cluster_fixture(30, 30, 4);
  ExtraTreesParams hp;
  hp.n_trees = 5;
  const TreeEnsemble m = fit(fx.training_points(), fx.training_labels(), hp, 1);
  const Embedding emb = embedding_of(fx.positives);
  const auto scores = score_pool(m, emb, SeedAudience{{0, 1, 2}, {}});
  EXPECT_EQ(scores.size(), 27u);
  for (const auto& s : scores) EXPECT_GE(s.id, 3);
  SeedAudience everyone;
  for (UserId id = 0; id < 30; ++id) everyone.member_ids.push_back(id);
  EXPECT_THROW(score_pool(m, emb, everyone), CapacityError);
}

TEST(AudienceSize, PercentAndAbsolute) {
  EXPECT_EQ(resolve_audience_size("10%", 5000), 500u);
  EXPECT_EQ(resolve_audience_size("500", 5000), 500u);
  EXPECT_EQ(resolve_audience_size("2.5%", 1000), 25u);
  EXPECT_THROW(resolve_audience_size("0", 10), ConfigError);
  EXPECT_THROW(resolve_audience_size("abc", 10), ConfigError);
  EXPECT_THROW(resolve_audience_size("", 10), ConfigError);
}

TEST(RankedCsv, Format) {
  const std::vector<ScoredUser> ranked{{4, 0.5}, {2, 0.25}};
  EXPECT_EQ(format_ranked_csv(ranked, 1), "rank,id,score\n1,4,0.5\n");
}
