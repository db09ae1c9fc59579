#pragma once

// Top-k evaluation and the repeated simulation harness: per-class seeded
// expansion runs, the counter-class baseline and the class-imbalance sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "audex/dataset.hpp"
#include "audex/error.hpp"
#include "audex/expansion.hpp"
#include "audex/extra_trees.hpp"
#include "audex/parallel.hpp"
#include "audex/training.hpp"
#include "audex/tsne.hpp"

namespace audex {

struct EvalCase {
  std::vector<UserId> a_true;  // true positive-class pool members, seed excluded
  std::vector<UserId> a_k;     // top-k audience
};

struct TopKCounts {
  std::size_t hits = 0;  // |A_true ∩ A_k|
  std::size_t k = 0;
  std::size_t n_true = 0;
};

inline TopKCounts topk_counts(const EvalCase& c) {
  const std::unordered_set<UserId> truth(c.a_true.begin(), c.a_true.end());
  TopKCounts out;
  out.k = c.a_k.size();
  out.n_true = truth.size();
  std::unordered_set<UserId> seen;
  for (UserId id : c.a_k)
    if (seen.insert(id).second && truth.count(id)) ++out.hits;
  return out;
}

inline double precision_at_k(const EvalCase& c) {
  const auto t = topk_counts(c);
  if (t.k == 0) throw ValidationError("precision_at_k: empty A_k");
  return static_cast<double>(t.hits) / static_cast<double>(t.k);
}

inline double recall_at_k(const EvalCase& c) {
  const auto t = topk_counts(c);
  if (t.n_true == 0) throw ValidationError("recall_at_k: empty A_true");
  return static_cast<double>(t.hits) / static_cast<double>(t.n_true);
}

// ---------------------------------------------------------------------------
// Harness

struct ExperimentConfig {
  std::size_t n1 = 250;
  std::size_t n0 = 250;
  NegativeStrategy strategy = NegativeStrategy::uniform;
  std::size_t repetitions = 30;
  // Top-k size; 0 uses each class's pool size after seed removal.
  std::size_t k = 0;
  // Classes to evaluate; empty means every class present in the labels.
  std::vector<int> classes;
  std::optional<int> counter_class;
  std::uint64_t rng_seed = 0;
  double padding = 0.05;
  ExtraTreesParams trees;
  unsigned threads = 1;

  nlohmann::json snapshot() const {
    return {{"n1", n1},
            {"n0", n0},
            {"strategy", to_string(strategy)},
            {"repetitions", repetitions},
            {"k", k},
            {"classes", classes},
            {"counter_class", counter_class ? nlohmann::json(*counter_class) : nlohmann::json()},
            {"rng_seed", rng_seed},
            {"padding", padding},
            {"n_trees", trees.n_trees},
            {"max_features", trees.max_features},
            {"min_samples_split", trees.min_samples_split},
            {"leaf_smoothing", trees.leaf_smoothing}};
  }
};

// Stream ids for the per-(class, repetition) derived seeds.
enum StreamId : std::uint64_t { kSeedStream = 0, kNegativeStream = 1, kFitStream = 2 };

inline std::uint64_t case_seed(std::uint64_t master, int cls, std::size_t rep, StreamId stream) {
  return derive_seed(master, {static_cast<std::uint64_t>(static_cast<std::int64_t>(cls)),
                              static_cast<std::uint64_t>(rep), stream});
}

struct ExperimentRow {
  int cls = 0;
  std::size_t repetition = 0;
  NegativeStrategy strategy = NegativeStrategy::uniform;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  std::size_t k = 0;
  double p_at_k = 0.0;
  double r_at_k = 0.0;
  std::vector<UserId> seed_ids;
};

struct MetricMeans {
  double p_at_k = 0.0;
  double r_at_k = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;
  std::map<int, MetricMeans> class_means;
  MetricMeans global;
  nlohmann::json config = nlohmann::json::object();
};

// Everything produced by one (class, repetition) expansion.
struct CaseResult {
  SeedAudience seed;
  TrainingSet training;
  TreeEnsemble model;
  ExpansionResult expansion;
  ExperimentRow row;
};

// Labelled view of an embedding: labels row-aligned with emb.ids.
inline std::vector<int> aligned_labels(const UserBase& base, const Embedding& emb) {
  if (!base.labels) throw ValidationError("the simulation needs a labelled user base");
  const IdIndex index(base.ids);
  std::vector<int> out(emb.size());
  for (std::size_t r = 0; r < emb.size(); ++r) {
    const auto row = index.find(emb.ids[r]);
    if (!row) throw ValidationError("embedded id " + std::to_string(emb.ids[r]) + " is not in the user base");
    out[r] = (*base.labels)[*row];
  }
  return out;
}

inline CaseResult run_case(const Embedding& emb, std::span<const int> labels,
                           const ExperimentConfig& cfg, int cls, std::size_t rep,
                           NegativeStrategy strategy, std::size_t n0, unsigned fit_threads = 1) {
  CaseResult out;
  out.seed = sample_seed(emb.ids, labels, cls, cfg.n1, case_seed(cfg.rng_seed, cls, rep, kSeedStream));

  TrainingOptions opt;
  opt.strategy = strategy;
  opt.n0 = n0;
  opt.rng_seed = case_seed(cfg.rng_seed, cls, rep, kNegativeStream);
  opt.padding = cfg.padding;
  opt.counter_class = cfg.counter_class;
  opt.labels = labels;
  out.training = build_training_set(emb, out.seed, opt);

  ExtraTreesParams hp = cfg.trees;
  hp.threads = fit_threads;
  out.model = fit(out.training, hp, case_seed(cfg.rng_seed, cls, rep, kFitStream));

  auto scores = score_pool(out.model, emb, out.seed);
  const std::unordered_set<UserId> seed_set(out.seed.member_ids.begin(), out.seed.member_ids.end());
  EvalCase ev;
  for (std::size_t r = 0; r < emb.size(); ++r)
    if (labels[r] == cls && !seed_set.count(emb.ids[r])) ev.a_true.push_back(emb.ids[r]);
  if (ev.a_true.empty())
    throw CapacityError("class " + std::to_string(cls) + " has no pool members outside the seed");

  const std::size_t k = cfg.k > 0 ? cfg.k : ev.a_true.size();
  if (k > scores.size())
    throw CapacityError("k=" + std::to_string(k) + " exceeds the pool size " + std::to_string(scores.size()));
  out.expansion = expand(std::move(scores), k, out.seed);
  out.expansion.manifest.strategy = std::string(to_string(strategy));
  ev.a_k = out.expansion.audience;

  out.row.cls = cls;
  out.row.repetition = rep;
  out.row.strategy = strategy;
  out.row.n1 = cfg.n1;
  out.row.n0 = n0;
  out.row.k = k;
  out.row.p_at_k = precision_at_k(ev);
  out.row.r_at_k = recall_at_k(ev);
  out.row.seed_ids = out.seed.member_ids;
  return out;
}

inline std::vector<int> classes_for(const ExperimentConfig& cfg, std::span<const int> labels) {
  if (!cfg.classes.empty()) return cfg.classes;
  std::vector<int> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline void fill_means(ExperimentReport& report) {
  std::map<int, std::pair<MetricMeans, std::size_t>> acc;
  MetricMeans total;
  for (const auto& row : report.rows) {
    auto& [m, n] = acc[row.cls];
    m.p_at_k += row.p_at_k;
    m.r_at_k += row.r_at_k;
    ++n;
    total.p_at_k += row.p_at_k;
    total.r_at_k += row.r_at_k;
  }
  report.class_means.clear();
  for (auto& [cls, mn] : acc)
    report.class_means[cls] = {mn.first.p_at_k / static_cast<double>(mn.second),
                               mn.first.r_at_k / static_cast<double>(mn.second)};
  if (!report.rows.empty()) {
    const double n = static_cast<double>(report.rows.size());
    report.global = {total.p_at_k / n, total.r_at_k / n};
  }
}

// Rows come out in (class, repetition) order whatever the thread count.
inline ExperimentReport run_experiment(const Embedding& emb, std::span<const int> labels,
                                       const ExperimentConfig& cfg) {
  if (labels.size() != emb.size()) throw ValidationError("run_experiment needs one label per embedded user");
  if (cfg.repetitions == 0) throw ConfigError("repetitions must be at least 1");
  const auto classes = classes_for(cfg, labels);
  struct Job {
    int cls;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (int c : classes)
    for (std::size_t r = 0; r < cfg.repetitions; ++r) jobs.push_back({c, r});

  ExperimentReport report;
  report.rows.resize(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    report.rows[j] = run_case(emb, labels, cfg, jobs[j].cls, jobs[j].rep, cfg.strategy, cfg.n0).row;
  });
  fill_means(report);
  report.config = cfg.snapshot();
  return report;
}

inline ExperimentReport run_experiment(const UserBase& base, const Embedding& emb,
                                       const ExperimentConfig& cfg) {
  const auto labels = aligned_labels(base, emb);
  return run_experiment(emb, labels, cfg);
}

// ---------------------------------------------------------------------------
// Counter-class baseline: the same seed samples trained once with uniform
// negatives and once with negatives from a second class.

struct BaselineReport {
  std::vector<ExperimentRow> rows;  // (repetition, strategy) order: uniform then counter_class
  MetricMeans uniform;
  MetricMeans counter_class;
};

inline BaselineReport baseline_comparison(const Embedding& emb, std::span<const int> labels,
                                          const ExperimentConfig& cfg, int seed_class, int counter_class) {
  if (labels.size() != emb.size()) throw ValidationError("baseline_comparison needs one label per embedded user");
  if (seed_class == counter_class) throw ValidationError("counter class equals the seed class");
  ExperimentConfig c = cfg;
  c.counter_class = counter_class;
  BaselineReport out;
  out.rows.resize(2 * cfg.repetitions);
  parallel_for(2 * cfg.repetitions, cfg.threads, [&](std::size_t j) {
    const std::size_t rep = j / 2;
    const auto strategy = j % 2 == 0 ? NegativeStrategy::uniform : NegativeStrategy::counter_class;
    out.rows[j] = run_case(emb, labels, c, seed_class, rep, strategy, c.n0).row;
  });
  for (const auto& row : out.rows) {
    auto& m = row.strategy == NegativeStrategy::uniform ? out.uniform : out.counter_class;
    m.p_at_k += row.p_at_k / static_cast<double>(cfg.repetitions);
    m.r_at_k += row.r_at_k / static_cast<double>(cfg.repetitions);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Imbalance sweep: for a fixed seed sample, n0 = round(n1 / ratio) and the
// size of the p1 >= 0.5 region of the decision grid is recorded.

struct ImbalanceRow {
  int cls = 0;
  std::size_t repetition = 0;
  double ratio = 1.0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  std::size_t region_count = 0;
  double p_at_k = 0.0;
  double r_at_k = 0.0;
};

inline std::size_t negatives_for_ratio(std::size_t n1, double ratio) {
  if (!(ratio > 0.0)) throw ConfigError("imbalance ratios must be positive");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n1) / ratio)));
}

inline std::vector<ImbalanceRow> imbalance_sweep(const Embedding& emb, std::span<const int> labels,
                                                 const ExperimentConfig& cfg, int cls,
                                                 std::span<const double> ratios,
                                                 std::size_t resolution = 200) {
  if (ratios.empty()) throw ConfigError("imbalance sweep needs at least one ratio");
  if (emb.dim() != 2) throw DimensionError("imbalance sweep needs a 2-D embedding");
  const BoundingBox box = bounding_box(emb, cfg.padding);
  std::vector<ImbalanceRow> rows(cfg.repetitions * ratios.size());
  parallel_for(rows.size(), cfg.threads, [&](std::size_t j) {
    const std::size_t rep = j / ratios.size();
    const double ratio = ratios[j % ratios.size()];
    const std::size_t n0 = negatives_for_ratio(cfg.n1, ratio);
    const CaseResult res = run_case(emb, labels, cfg, cls, rep, NegativeStrategy::uniform, n0);
    ImbalanceRow& row = rows[j];
    row.cls = cls;
    row.repetition = rep;
    row.ratio = ratio;
    row.n1 = cfg.n1;
    row.n0 = n0;
    row.region_count = decision_grid(res.model, box, resolution).count_at_least(0.5);
    row.p_at_k = res.row.p_at_k;
    row.r_at_k = res.row.r_at_k;
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_report_csv(std::span<const ExperimentRow> rows) {
  std::string out = "class,repetition,strategy,n1,n0,k,p_at_k,r_at_k\n";
  for (const auto& r : rows)
    out += std::to_string(r.cls) + "," + std::to_string(r.repetition) + "," +
           std::string(to_string(r.strategy)) + "," + std::to_string(r.n1) + "," +
           std::to_string(r.n0) + "," + std::to_string(r.k) + "," + format_double(r.p_at_k) + "," +
           format_double(r.r_at_k) + "\n";
  return out;
}

inline std::string format_imbalance_csv(std::span<const ImbalanceRow> rows) {
  std::string out = "class,repetition,ratio,n1,n0,region_count,p_at_k,r_at_k\n";
  for (const auto& r : rows)
    out += std::to_string(r.cls) + "," + std::to_string(r.repetition) + "," + format_double(r.ratio) +
           "," + std::to_string(r.n1) + "," + std::to_string(r.n0) + "," +
           std::to_string(r.region_count) + "," + format_double(r.p_at_k) + "," +
           format_double(r.r_at_k) + "\n";
  return out;
}

inline nlohmann::json summary_json(const ExperimentReport& report) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, m] : report.class_means)
    per_class[std::to_string(cls)] = {{"p_at_k", m.p_at_k}, {"r_at_k", m.r_at_k}};
  return {{"rows", report.rows.size()},
          {"per_class", per_class},
          {"global", {{"p_at_k", report.global.p_at_k}, {"r_at_k", report.global.r_at_k}}},
          {"config", report.config}};
}

}  // namespace audex
