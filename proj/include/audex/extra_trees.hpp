#pragma once

// Extremely Randomized Trees for binary classification.
//
// Every tree sees the full training sample (no bootstrap). At each node K
// candidate features are drawn among those that are not constant on the
// node, each gets one threshold drawn uniformly inside the feature's range
// at that node, and the candidate with the largest Gini decrease wins.
// Leaves keep the raw fraction of label-1 samples; the ensemble posterior is
// the mean leaf fraction over trees.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "audex/error.hpp"
#include "audex/matrix.hpp"
#include "audex/parallel.hpp"
#include "audex/random.hpp"
#include "audex/training.hpp"

namespace audex {

struct ExtraTreesParams {
  std::size_t n_trees = 100;
  // Candidate features per split; 0 selects ceil(sqrt(dim)).
  std::size_t max_features = 0;
  std::size_t min_samples_split = 2;
  // Laplace pseudo-count added to both classes in every leaf. 0 disables it.
  double leaf_smoothing = 0.0;
  bool allow_single_class = false;
  unsigned threads = 1;

  std::size_t features_for(std::size_t dim) const {
    if (max_features > 0) return std::min(max_features, dim);
    return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim))));
  }
};

struct TreeNode {
  // Internal nodes: feature >= 0 and both children set. Leaves: feature == -1.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double class1_fraction = 0.0;
  std::size_t sample_count = 0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const {
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf())
      node = &nodes[static_cast<std::size_t>(x[node->feature] <= node->threshold ? node->left
                                                                                  : node->right)];
    return *node;
  }
  std::size_t depth() const {
    std::vector<std::pair<int, std::size_t>> stack{{0, 1}};
    std::size_t best = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      const auto& n = nodes[static_cast<std::size_t>(i)];
      if (!n.is_leaf()) {
        stack.emplace_back(n.left, d + 1);
        stack.emplace_back(n.right, d + 1);
      }
    }
    return best;
  }
};

struct TreeEnsemble {
  std::vector<Tree> trees;
  ExtraTreesParams params;
  std::size_t dim = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t training_hash = 0;
};

// p0 is stored as 1 - p1.
struct Posterior {
  double p0 = 0.0;
  double p1 = 0.0;

  static Posterior from_p1(double p1) { return {1.0 - p1, p1}; }
};

// Order-independent digest of a training set.
inline std::uint64_t training_set_hash(const Matrix& points, std::span<const int> labels) {
  std::vector<std::size_t> order(points.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (labels[a] != labels[b]) return labels[a] < labels[b];
    auto ra = points.row(a), rb = points.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t r : order) {
    mix(&labels[r], sizeof(int));
    for (double v : points.row(r)) mix(&v, sizeof(double));
  }
  return h;
}

namespace detail {

inline double gini(std::size_t n, std::size_t c1) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(c1) / static_cast<double>(n);
  return 2.0 * p * (1.0 - p);
}

inline Tree grow_tree(const Matrix& x, std::span<const int> y, const ExtraTreesParams& hp,
                      std::uint64_t seed) {
  const std::size_t dim = x.cols();
  const std::size_t k = hp.features_for(dim);
  Rng rng = make_rng(seed);
  Tree tree;

  struct Pending {
    int node;
    std::vector<std::size_t> samples;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  {
    std::vector<std::size_t> all(x.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    stack.push_back({0, std::move(all)});
  }

  std::vector<double> lo(dim), hi(dim);
  std::vector<std::size_t> varying;
  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();
    const auto& s = job.samples;
    const std::size_t n = s.size();
    std::size_t c1 = 0;
    for (std::size_t i : s) c1 += y[i] == 1;

    auto make_leaf = [&] {
      TreeNode& node = tree.nodes[static_cast<std::size_t>(job.node)];
      node.feature = -1;
      node.sample_count = n;
      node.class1_fraction = (static_cast<double>(c1) + hp.leaf_smoothing) /
                             (static_cast<double>(n) + 2.0 * hp.leaf_smoothing);
    };
    if (c1 == 0 || c1 == n || n < hp.min_samples_split) {
      make_leaf();
      continue;
    }

    varying.clear();
    for (std::size_t f = 0; f < dim; ++f) {
      lo[f] = hi[f] = x(s[0], f);
      for (std::size_t i : s) {
        lo[f] = std::min(lo[f], x(i, f));
        hi[f] = std::max(hi[f], x(i, f));
      }
      if (hi[f] > lo[f]) varying.push_back(f);
    }
    if (varying.empty()) {  // contradictory duplicates
      make_leaf();
      continue;
    }

    const double parent = gini(n, c1);
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = -1.0;
    for (std::size_t pick : sample_without_replacement(varying.size(), std::min(k, varying.size()), rng)) {
      const std::size_t f = varying[pick];
      double t = lo[f];
      // Adjacent doubles leave no room strictly inside; lo still separates.
      if (std::nextafter(lo[f], hi[f]) < hi[f]) {
        do {
          t = lo[f] + (hi[f] - lo[f]) * uniform01(rng);
        } while (!(t > lo[f] && t < hi[f]));
      }
      std::size_t nl = 0, c1l = 0;
      for (std::size_t i : s)
        if (x(i, f) <= t) {
          ++nl;
          c1l += y[i] == 1;
        }
      const std::size_t nr = n - nl;
      const double gain = parent - (static_cast<double>(nl) * gini(nl, c1l) +
                                    static_cast<double>(nr) * gini(nr, c1 - c1l)) /
                                       static_cast<double>(n);
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = static_cast<int>(f);
        best_threshold = t;
      }
    }

    std::vector<std::size_t> left, right;
    for (std::size_t i : s)
      (x(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right).push_back(i);

    const int left_id = static_cast<int>(tree.nodes.size());
    const int right_id = left_id + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[static_cast<std::size_t>(job.node)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left_id;
    node.right = right_id;
    node.sample_count = n;
    node.class1_fraction = static_cast<double>(c1) / static_cast<double>(n);
    // Right is pushed first so the left subtree is grown (and consumes
    // random numbers) first.
    stack.push_back({right_id, std::move(right)});
    stack.push_back({left_id, std::move(left)});
  }
  return tree;
}

}  // namespace detail

inline TreeEnsemble fit(const Matrix& points, std::span<const int> labels,
                        const ExtraTreesParams& hp, std::uint64_t rng_seed) {
  if (points.rows() == 0) throw ValidationError("cannot fit on an empty training set");
  if (labels.size() != points.rows())
    throw DimensionError("fit: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(points.rows()) + " points");
  if (hp.n_trees == 0) throw ConfigError("n_trees must be at least 1");
  if (hp.min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
  if (hp.leaf_smoothing < 0.0) throw ConfigError("leaf_smoothing must be non-negative");
  bool has0 = false, has1 = false;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("labels must be 0 or 1, got " + std::to_string(l));
    (l == 1 ? has1 : has0) = true;
  }
  if (!(has0 && has1) && !hp.allow_single_class)
    throw ValidationError("training set contains a single class");
  for (double v : points.data())
    if (!std::isfinite(v)) throw ValidationError("training set contains non-finite values");

  TreeEnsemble model;
  model.params = hp;
  model.dim = points.cols();
  model.rng_seed = rng_seed;
  model.training_hash = training_set_hash(points, labels);
  model.trees.resize(hp.n_trees);
  parallel_for(hp.n_trees, hp.threads, [&](std::size_t t) {
    model.trees[t] = detail::grow_tree(points, labels, hp, derive_seed(rng_seed, {t}));
  });
  return model;
}

inline TreeEnsemble fit(const TrainingSet& train, const ExtraTreesParams& hp,
                        std::uint64_t rng_seed) {
  return fit(train.points, train.labels, hp, rng_seed);
}

inline Posterior predict_proba(const TreeEnsemble& model, std::span<const double> x) {
  if (x.size() != model.dim)
    throw DimensionError("predict_proba: point has dimension " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(model.dim));
  double sum = 0.0, lo = 1.0, hi = 0.0;
  for (const Tree& t : model.trees) {
    const double v = t.leaf_for(x).class1_fraction;
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // The clamp absorbs rounding in the mean so it never leaves [min, max].
  const double p1 = std::clamp(sum / static_cast<double>(model.trees.size()), lo, hi);
  return Posterior::from_p1(p1);
}

// Maximum a posteriori class; p1 == 0.5 goes to class 1.
inline int predict_class(const Posterior& p) { return p.p1 >= p.p0 ? 1 : 0; }

inline int predict_class(const TreeEnsemble& model, std::span<const double> x) {
  return predict_class(predict_proba(model, x));
}

// Lattice of p1 values over a 2-D box. values[r * resolution + c] is the
// posterior at (xs[c], ys[r]).
struct DecisionGrid {
  std::size_t resolution = 0;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;

  std::size_t count_at_least(double level) const {
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [level](double v) { return v >= level; }));
  }
};

inline std::vector<double> lattice_axis(double lo, double hi, std::size_t resolution) {
  std::vector<double> axis(resolution);
  if (resolution == 1) {
    axis[0] = 0.5 * (lo + hi);
    return axis;
  }
  for (std::size_t i = 0; i < resolution; ++i)
    axis[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  return axis;
}

// Evaluates `score(point)` at every lattice point of a 2-D box.
template <typename Score>
DecisionGrid evaluate_grid(const BoundingBox& box, std::size_t resolution, Score&& score) {
  if (box.dim() != 2) throw DimensionError("decision grids are defined for 2-D boxes only");
  if (resolution == 0) throw ValidationError("grid resolution must be positive");
  DecisionGrid g;
  g.resolution = resolution;
  g.xs = lattice_axis(box.low[0], box.high[0], resolution);
  g.ys = lattice_axis(box.low[1], box.high[1], resolution);
  g.values.resize(resolution * resolution);
  for (std::size_t r = 0; r < resolution; ++r)
    for (std::size_t c = 0; c < resolution; ++c) {
      const double pt[2] = {g.xs[c], g.ys[r]};
      g.values[r * resolution + c] = score(std::span<const double>(pt, 2));
    }
  return g;
}

inline DecisionGrid decision_grid(const TreeEnsemble& model, const BoundingBox& box,
                                  std::size_t resolution) {
  if (model.dim != 2) throw DimensionError("decision_grid needs a 2-D model");
  return evaluate_grid(box, resolution,
                       [&](std::span<const double> x) { return predict_proba(model, x).p1; });
}

// CSV layout shared by decision grids and oracle probe dumps.
inline std::string format_grid_csv(const DecisionGrid& g) {
  std::string out = "row,col,x,y,p1\n";
  for (std::size_t r = 0; r < g.resolution; ++r)
    for (std::size_t c = 0; c < g.resolution; ++c) {
      out += std::to_string(r) + "," + std::to_string(c) + "," + format_double(g.xs[c]) + "," +
             format_double(g.ys[r]) + "," + format_double(g.values[r * g.resolution + c]) + "\n";
    }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: one object per tree holding parallel node arrays.

inline constexpr const char* kModelFormat = "audex-extra-trees";
inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const TreeEnsemble& m) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelFormatVersion;
  j["dim"] = m.dim;
  j["rng_seed"] = m.rng_seed;
  j["training_hash"] = m.training_hash;
  j["params"] = {{"n_trees", m.params.n_trees},
                 {"max_features", m.params.max_features},
                 {"min_samples_split", m.params.min_samples_split},
                 {"leaf_smoothing", m.params.leaf_smoothing},
                 {"allow_single_class", m.params.allow_single_class}};
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const Tree& t : m.trees) {
    nlohmann::json feature, threshold, left, right, value, count;
    for (const TreeNode& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.class1_fraction);
      count.push_back(n.sample_count);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"value", value},
                     {"count", count}});
  }
  return j;
}

inline TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kModelFormat) throw FormatError("not an audex extra-trees model");
  if (j.value("version", 0) != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(j.value("version", 0)));
  TreeEnsemble m;
  m.dim = j.at("dim").get<std::size_t>();
  m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  m.training_hash = j.at("training_hash").get<std::uint64_t>();
  const auto& p = j.at("params");
  m.params.n_trees = p.at("n_trees").get<std::size_t>();
  m.params.max_features = p.at("max_features").get<std::size_t>();
  m.params.min_samples_split = p.at("min_samples_split").get<std::size_t>();
  m.params.leaf_smoothing = p.at("leaf_smoothing").get<double>();
  m.params.allow_single_class = p.at("allow_single_class").get<bool>();
  for (const auto& jt : j.at("trees")) {
    Tree t;
    const std::size_t count = jt.at("feature").size();
    t.nodes.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      TreeNode& n = t.nodes[i];
      n.feature = jt["feature"][i].get<int>();
      n.threshold = jt["threshold"][i].get<double>();
      n.left = jt["left"][i].get<int>();
      n.right = jt["right"][i].get<int>();
      n.class1_fraction = jt["value"][i].get<double>();
      n.sample_count = jt["count"][i].get<std::size_t>();
      if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(n.left) >= count ||
                           static_cast<std::size_t>(n.right) >= count))
        throw FormatError("model tree has an out-of-range child index");
    }
    if (t.nodes.empty()) throw FormatError("model tree has no nodes");
    m.trees.push_back(std::move(t));
  }
  if (m.trees.empty()) throw FormatError("model has no trees");
  return m;
}

}  // namespace audex
