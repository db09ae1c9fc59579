#pragma once

// Scoring the pool and selecting the expanded audience: the m highest
// scoring users outside the seed, ordered by (score desc, id asc).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "audex/error.hpp"
#include "audex/extra_trees.hpp"
#include "audex/parallel.hpp"
#include "audex/training.hpp"
#include "audex/tsne.hpp"

namespace audex {

struct ScoredUser {
  UserId id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredUser&, const ScoredUser&) = default;
};

// Total order used for ranking: higher score first, then smaller id.
inline bool ranks_before(const ScoredUser& a, const ScoredUser& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

struct ExpansionManifest {
  std::size_t requested_m = 0;
  std::size_t resolved_m = 0;
  bool truncated = false;
  std::string strategy;
  std::string config_hash;
  std::map<std::string, std::uint64_t> rng_seeds;
  nlohmann::json hyperparams = nlohmann::json::object();
};

struct ExpansionResult {
  std::vector<ScoredUser> ranked;
  std::vector<UserId> audience;
  std::size_t m = 0;
  std::vector<UserId> excluded_seed;
  ExpansionManifest manifest;
};

// Scores every embedded user outside the seed, in embedding order.
inline std::vector<ScoredUser> score_pool(const TreeEnsemble& model, const Embedding& emb,
                                          const SeedAudience& seed, unsigned threads = 1) {
  if (model.dim != emb.dim())
    throw DimensionError("score_pool: model dimension " + std::to_string(model.dim) +
                         " does not match embedding dimension " + std::to_string(emb.dim()));
  const std::unordered_set<UserId> excluded(seed.member_ids.begin(), seed.member_ids.end());
  std::vector<std::size_t> rows;
  rows.reserve(emb.size());
  for (std::size_t r = 0; r < emb.size(); ++r)
    if (!excluded.count(emb.ids[r])) rows.push_back(r);
  if (rows.empty()) throw CapacityError("score_pool: the pool is empty after excluding the seed");

  std::vector<ScoredUser> out(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    out[i] = {emb.ids[rows[i]], predict_proba(model, emb.coords.row(rows[i])).p1};
  });
  return out;
}

inline ExpansionResult expand(std::vector<ScoredUser> scores, std::size_t m) {
  if (m == 0) throw ValidationError("audience size m must be at least 1");
  for (const auto& s : scores)
    if (!(s.score >= 0.0 && s.score <= 1.0))
      throw ValidationError("score of user " + std::to_string(s.id) + " is outside [0, 1]");
  std::sort(scores.begin(), scores.end(), ranks_before);
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i].id == scores[i - 1].id && scores[i].score == scores[i - 1].score)
      throw ValidationError("duplicate user id " + std::to_string(scores[i].id) + " in scores");

  ExpansionResult res;
  res.m = m;
  res.ranked = std::move(scores);
  const std::size_t take = std::min(m, res.ranked.size());
  res.audience.reserve(take);
  for (std::size_t i = 0; i < take; ++i) res.audience.push_back(res.ranked[i].id);
  res.manifest.requested_m = m;
  res.manifest.resolved_m = take;
  res.manifest.truncated = take < m;
  return res;
}

// Same as expand() but also drops any seed member that slipped into the
// score list and records the seed on the result.
inline ExpansionResult expand(std::vector<ScoredUser> scores, std::size_t m,
                              const SeedAudience& seed) {
  const std::unordered_set<UserId> excluded(seed.member_ids.begin(), seed.member_ids.end());
  std::erase_if(scores, [&](const ScoredUser& s) { return excluded.count(s.id) > 0; });
  ExpansionResult res = expand(std::move(scores), m);
  res.excluded_seed = seed.member_ids;
  return res;
}

// Resolves an audience size given either as an absolute count ("500") or as
// a percentage of the user base ("10%").
inline std::size_t resolve_audience_size(std::string_view spec, std::size_t n) {
  auto fail = [&] {
    return ConfigError("invalid audience size '" + std::string(spec) +
                       "' (expected a positive integer or a percentage such as 10%)");
  };
  if (spec.empty()) throw fail();
  if (spec.back() == '%') {
    std::string body(spec.substr(0, spec.size() - 1));
    char* end = nullptr;
    const double pct = std::strtod(body.c_str(), &end);
    if (body.empty() || end != body.c_str() + body.size() || !(pct > 0.0) || pct > 100.0)
      throw fail();
    const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(n) * pct / 100.0));
    if (m == 0) throw fail();
    return m;
  }
  std::size_t m = 0;
  for (char c : spec) {
    if (c < '0' || c > '9') throw fail();
    m = m * 10 + static_cast<std::size_t>(c - '0');
  }
  if (m == 0) throw fail();
  return m;
}

inline std::string format_ranked_csv(const std::vector<ScoredUser>& ranked, std::size_t limit) {
  std::string out = "rank,id,score\n";
  const std::size_t n = std::min(limit, ranked.size());
  for (std::size_t i = 0; i < n; ++i)
    out += std::to_string(i + 1) + "," + std::to_string(ranked[i].id) + "," +
           format_double(ranked[i].score) + "\n";
  return out;
}

inline nlohmann::json to_json(const ExpansionManifest& m) {
  return {{"requested_m", m.requested_m},
          {"m", m.resolved_m},
          {"truncated", m.truncated},
          {"strategy", m.strategy},
          {"config_hash", m.config_hash},
          {"rng_seeds", m.rng_seeds},
          {"hyperparams", m.hyperparams}};
}

}  // namespace audex
