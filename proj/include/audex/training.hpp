#pragma once

// Two-class training sets: positives from the seed audience, negatives from
// one of three strategies.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "audex/dataset.hpp"
#include "audex/error.hpp"
#include "audex/matrix.hpp"
#include "audex/random.hpp"
#include "audex/tsne.hpp"

namespace audex {

struct SeedAudience {
  std::vector<UserId> member_ids;
  std::optional<int> class_tag;
};

struct BoundingBox {
  std::vector<double> low;
  std::vector<double> high;

  std::size_t dim() const noexcept { return low.size(); }
  double width(std::size_t c) const noexcept { return high[c] - low[c]; }
  double volume() const noexcept {
    double v = 1.0;
    for (std::size_t c = 0; c < dim(); ++c) v *= width(c);
    return v;
  }
  bool contains(std::span<const double> x) const noexcept {
    for (std::size_t c = 0; c < dim(); ++c)
      if (x[c] < low[c] || x[c] > high[c]) return false;
    return true;
  }
};

enum class NegativeStrategy { uniform, random_users, counter_class };

inline std::string_view to_string(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::uniform: return "uniform";
    case NegativeStrategy::random_users: return "random_users";
    case NegativeStrategy::counter_class: return "counter_class";
  }
  return "unknown";
}

inline NegativeStrategy parse_strategy(std::string_view s) {
  if (s == "uniform") return NegativeStrategy::uniform;
  if (s == "random_users") return NegativeStrategy::random_users;
  if (s == "counter_class") return NegativeStrategy::counter_class;
  throw ConfigError("unknown negative strategy '" + std::string(s) +
                    "' (expected uniform, random_users or counter_class)");
}

struct TrainingSet {
  Matrix points;
  std::vector<int> labels;
  // Source user of each row; nullopt for synthetic points.
  std::vector<std::optional<UserId>> sources;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  NegativeStrategy strategy = NegativeStrategy::uniform;

  std::size_t size() const noexcept { return labels.size(); }
};

// Maps user ids to embedding rows.
class IdIndex {
 public:
  explicit IdIndex(std::span<const UserId> ids) {
    rows_.reserve(ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r) rows_.emplace(ids[r], r);
  }
  std::optional<std::size_t> find(UserId id) const {
    auto it = rows_.find(id);
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t at(UserId id) const {
    auto it = rows_.find(id);
    if (it == rows_.end()) throw ValidationError("unknown user id " + std::to_string(id));
    return it->second;
  }

 private:
  std::unordered_map<UserId, std::size_t> rows_;
};

inline BoundingBox bounding_box(const Matrix& coords, double padding) {
  if (coords.rows() < 2) throw DegenerateError("bounding_box needs at least two points");
  if (!(padding >= 0.0)) throw ValidationError("bounding_box padding must be non-negative");
  BoundingBox box;
  for (std::size_t c = 0; c < coords.cols(); ++c) {
    double lo = coords(0, c), hi = coords(0, c);
    for (std::size_t r = 1; r < coords.rows(); ++r) {
      lo = std::min(lo, coords(r, c));
      hi = std::max(hi, coords(r, c));
    }
    const double range = hi - lo;
    if (!(range > 0.0))
      throw DegenerateError("bounding_box: zero range in dimension " + std::to_string(c));
    box.low.push_back(lo - padding * range);
    box.high.push_back(hi + padding * range);
  }
  return box;
}

inline BoundingBox bounding_box(const Embedding& emb, double padding) {
  return bounding_box(emb.coords, padding);
}

// Picks n1 distinct members of `class_tag`. `labels` is row-aligned with `ids`.
inline SeedAudience sample_seed(std::span<const UserId> ids, std::span<const int> labels,
                                int class_tag, std::size_t n1, std::uint64_t rng_seed) {
  if (labels.size() != ids.size()) throw ValidationError("sample_seed needs one label per user");
  if (n1 == 0) throw ValidationError("seed size n1 must be positive");
  std::vector<UserId> members;
  for (std::size_t r = 0; r < ids.size(); ++r)
    if (labels[r] == class_tag) members.push_back(ids[r]);
  if (members.size() < n1)
    throw CapacityError("class " + std::to_string(class_tag) + " has " +
                        std::to_string(members.size()) + " members, cannot draw " +
                        std::to_string(n1) + " seeds");
  Rng rng = make_rng(rng_seed);
  SeedAudience seed;
  seed.class_tag = class_tag;
  for (std::size_t pick : sample_without_replacement(members.size(), n1, rng))
    seed.member_ids.push_back(members[pick]);
  std::sort(seed.member_ids.begin(), seed.member_ids.end());
  return seed;
}

inline SeedAudience sample_seed(const UserBase& base, int class_tag, std::size_t n1,
                                std::uint64_t rng_seed) {
  if (!base.labels) throw ValidationError("sample_seed requires a labelled user base");
  return sample_seed(base.ids, *base.labels, class_tag, n1, rng_seed);
}

// n0 i.i.d. points uniform over the box.
inline Matrix sample_uniform_negatives(const BoundingBox& box, std::size_t n0,
                                       std::uint64_t rng_seed) {
  for (std::size_t c = 0; c < box.dim(); ++c)
    if (!(box.low[c] < box.high[c]))
      throw DegenerateError("sample_uniform_negatives: empty box in dimension " + std::to_string(c));
  Rng rng = make_rng(rng_seed);
  Matrix out(n0, box.dim());
  for (std::size_t r = 0; r < n0; ++r)
    for (std::size_t c = 0; c < box.dim(); ++c)
      out(r, c) = box.low[c] + box.width(c) * uniform01(rng);
  return out;
}

struct TrainingOptions {
  NegativeStrategy strategy = NegativeStrategy::uniform;
  std::size_t n0 = 0;
  std::uint64_t rng_seed = 0;
  double padding = 0.05;
  std::optional<int> counter_class;
  // Row-aligned with the embedding; required for counter_class.
  std::span<const int> labels;
};

inline TrainingSet build_training_set(const Embedding& emb, const SeedAudience& seed,
                                      const TrainingOptions& opt) {
  if (seed.member_ids.empty()) throw ValidationError("seed audience is empty");
  if (opt.n0 == 0) throw ValidationError("n0 must be positive");
  const IdIndex index(emb.ids);
  std::unordered_set<UserId> in_seed;
  for (UserId id : seed.member_ids) {
    if (!index.find(id))
      throw ValidationError("seed member " + std::to_string(id) + " is not in the embedding");
    if (!in_seed.insert(id).second)
      throw ValidationError("seed member " + std::to_string(id) + " appears twice");
  }

  TrainingSet ts;
  ts.strategy = opt.strategy;
  ts.n1 = seed.member_ids.size();
  ts.n0 = opt.n0;
  for (UserId id : seed.member_ids) {
    ts.points.append_row(emb.coords.row(index.at(id)));
    ts.labels.push_back(1);
    ts.sources.emplace_back(id);
  }

  auto add_user_negatives = [&](const std::vector<std::size_t>& pool_rows) {
    if (pool_rows.size() < opt.n0)
      throw CapacityError("negative pool has " + std::to_string(pool_rows.size()) +
                          " users, cannot draw n0=" + std::to_string(opt.n0));
    Rng rng = make_rng(opt.rng_seed);
    for (std::size_t pick : sample_without_replacement(pool_rows.size(), opt.n0, rng)) {
      const std::size_t r = pool_rows[pick];
      ts.points.append_row(emb.coords.row(r));
      ts.labels.push_back(0);
      ts.sources.emplace_back(emb.ids[r]);
    }
  };

  switch (opt.strategy) {
    case NegativeStrategy::uniform: {
      const Matrix neg = sample_uniform_negatives(bounding_box(emb, opt.padding), opt.n0, opt.rng_seed);
      for (std::size_t r = 0; r < neg.rows(); ++r) {
        ts.points.append_row(neg.row(r));
        ts.labels.push_back(0);
        ts.sources.emplace_back(std::nullopt);
      }
      break;
    }
    case NegativeStrategy::random_users: {
      std::vector<std::size_t> pool;
      for (std::size_t r = 0; r < emb.size(); ++r)
        if (!in_seed.count(emb.ids[r])) pool.push_back(r);
      add_user_negatives(pool);
      break;
    }
    case NegativeStrategy::counter_class: {
      if (!opt.counter_class) throw ValidationError("counter_class strategy needs a counter class");
      if (opt.labels.size() != emb.size())
        throw ValidationError("counter_class strategy needs one label per embedded user");
      const int counter = *opt.counter_class;
      if (seed.class_tag && *seed.class_tag == counter)
        throw ValidationError("counter class " + std::to_string(counter) +
                              " is the seed's own class");
      std::vector<std::size_t> pool;
      for (std::size_t r = 0; r < emb.size(); ++r) {
        if (opt.labels[r] != counter) continue;
        if (in_seed.count(emb.ids[r]))
          throw ValidationError("counter class " + std::to_string(counter) +
                                " contains seed member " + std::to_string(emb.ids[r]));
        pool.push_back(r);
      }
      add_user_negatives(pool);
      break;
    }
  }
  return ts;
}

}  // namespace audex
