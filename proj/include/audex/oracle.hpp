#pragma once

// Ground-truth machinery for the posterior p(1|x) = n1 f / (n0 g + n1 f):
// closed-form 1-D scenarios, a Gaussian-KDE posterior for 2-D fixtures, and
// Spearman rank agreement between two score lists.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "audex/error.hpp"
#include "audex/matrix.hpp"
#include "audex/random.hpp"
#include "audex/training.hpp"

namespace audex {

struct NormalDensity {
  double mean = 0.0;
  double sd = 1.0;

  double log_pdf(double x) const {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  double pdf(double x) const { return std::exp(log_pdf(x)); }
};

struct UniformDensity {
  double low = 0.0;
  double high = 1.0;

  double log_pdf(double x) const {
    if (x < low || x > high) return -std::numeric_limits<double>::infinity();
    return -std::log(high - low);
  }
  double pdf(double x) const { return (x < low || x > high) ? 0.0 : 1.0 / (high - low); }
};

using NegativeDensity = std::variant<NormalDensity, UniformDensity>;

struct UnivariateScenario {
  NormalDensity f;   // seed density
  NegativeDensity g; // negative-sample density
  double n0 = 1.0;
  double n1 = 1.0;

  void validate() const {
    if (!(f.sd > 0.0)) throw ValidationError("seed density needs a positive standard deviation");
    if (const auto* u = std::get_if<UniformDensity>(&g); u && !(u->low < u->high))
      throw ValidationError("uniform negative density needs low < high");
    if (const auto* nd = std::get_if<NormalDensity>(&g); nd && !(nd->sd > 0.0))
      throw ValidationError("normal negative density needs a positive standard deviation");
    if (!(n0 >= 1.0 && n1 >= 1.0)) throw ValidationError("class weights must be at least 1");
  }
  double log_g(double x) const {
    return std::visit([x](const auto& d) { return d.log_pdf(x); }, g);
  }
  double g_pdf(double x) const {
    return std::visit([x](const auto& d) { return d.pdf(x); }, g);
  }
};

// Probability of side `a` given the log weighted densities of both sides,
// i.e. exp(la) / (exp(la) + exp(lb)). The smaller of the two probabilities is
// always evaluated by the same expression and the larger one as its
// complement, so swapping the roles yields values that add up to exactly 1.
inline double posterior_from_logs(double la, double lb) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (la == neg_inf && lb == neg_inf)
    throw ValidationError("posterior undefined: both densities are zero");
  if (la == neg_inf) return 0.0;
  if (lb == neg_inf) return 1.0;
  const double t = la - lb;
  const double e = std::exp(-std::abs(t));
  const double small = e / (1.0 + e);
  return t <= 0.0 ? small : 1.0 - small;
}

// n1 f / (n0 g + n1 f) for plain density values.
inline double bayes_posterior(double f, double g, double n0, double n1) {
  if (f < 0.0 || g < 0.0) throw ValidationError("densities must be non-negative");
  return posterior_from_logs(std::log(n1) + std::log(f), std::log(n0) + std::log(g));
}

inline double analytic_posterior(double x, const UnivariateScenario& s) {
  return posterior_from_logs(std::log(s.n1) + s.f.log_pdf(x), std::log(s.n0) + s.log_g(x));
}

// Posterior of the negative class, the same formula with the roles swapped.
inline double analytic_posterior_class0(double x, const UnivariateScenario& s) {
  return posterior_from_logs(std::log(s.n0) + s.log_g(x), std::log(s.n1) + s.f.log_pdf(x));
}

inline constexpr double kThresholdScanStep = 1e-3;
inline constexpr double kThresholdTolerance = 1e-10;
inline constexpr double kThresholdResidual = 1e-9;

// Roots of n1 f(x) = n0 g(x), ascending. Sign changes are located on a
// regular scan grid and refined by bisection; jumps at the edges of a
// uniform support change sign without being roots and are discarded by the
// residual check.
inline std::vector<double> decision_thresholds(const UnivariateScenario& s) {
  s.validate();
  auto h = [&](double x) { return s.n1 * s.f.pdf(x) - s.n0 * s.g_pdf(x); };

  double lo = s.f.mean - 10.0 * s.f.sd;
  double hi = s.f.mean + 10.0 * s.f.sd;
  if (const auto* u = std::get_if<UniformDensity>(&s.g)) {
    lo = std::min(lo, u->low);
    hi = std::max(hi, u->high);
  } else {
    const auto& nd = std::get<NormalDensity>(s.g);
    lo = std::min(lo, nd.mean - 10.0 * nd.sd);
    hi = std::max(hi, nd.mean + 10.0 * nd.sd);
  }

  const auto steps = static_cast<std::size_t>(std::ceil((hi - lo) / kThresholdScanStep));
  std::vector<double> roots;
  // A sign change across a density jump (edge of a uniform support) is not a
  // root: h stays large on one side of the final bracket.
  auto add_root = [&](double r, double a, double b) {
    if (std::max({std::abs(h(r)), std::abs(h(a)), std::abs(h(b))}) >= kThresholdResidual) return;
    if (!roots.empty() && std::abs(roots.back() - r) < kThresholdScanStep) return;
    roots.push_back(r);
  };

  double x0 = lo, h0 = h(x0);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double x1 = std::min(hi, lo + static_cast<double>(i) * kThresholdScanStep);
    const double h1 = h(x1);
    if (h0 == 0.0) {
      add_root(x0, x0, x0);
    } else if (h1 != 0.0 && (h0 < 0.0) != (h1 < 0.0)) {
      double a = x0, b = x1, ha = h0;
      while (b - a > kThresholdTolerance) {
        const double mid = 0.5 * (a + b);
        const double hm = h(mid);
        if (hm == 0.0) {
          a = b = mid;
          break;
        }
        if ((hm < 0.0) == (ha < 0.0)) {
          a = mid;
          ha = hm;
        } else {
          b = mid;
        }
      }
      add_root(0.5 * (a + b), a, b);
    }
    x0 = x1;
    h0 = h1;
  }
  if (h0 == 0.0) add_root(x0, x0, x0);
  return roots;
}

// ---------------------------------------------------------------------------
// Gaussian KDE posterior

struct KdeOracle {
  Matrix centers;
  double bandwidth = 1.0;
  BoundingBox box;  // g = 1 / volume(box)
  double n0 = 1.0;
  double n1 = 1.0;

  void validate() const {
    if (centers.rows() == 0) throw ValidationError("KDE oracle needs at least one center");
    if (!(bandwidth > 0.0)) throw ValidationError("KDE bandwidth must be positive");
    if (box.dim() != centers.cols()) throw DimensionError("KDE box and centers disagree on dimension");
  }
};

// Silverman's rule 1.06 * sigma * n^(-1/5) applied per dimension; the
// isotropic bandwidth is the mean of the per-dimension values.
inline double silverman_bandwidth(const Matrix& centers) {
  const std::size_t n = centers.rows();
  if (n < 2) throw ValidationError("Silverman bandwidth needs at least two centers");
  double total = 0.0;
  for (std::size_t c = 0; c < centers.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += centers(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (centers(r, c) - mean) * (centers(r, c) - mean);
    var /= static_cast<double>(n - 1);
    total += 1.06 * std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
  }
  const double h = total / static_cast<double>(centers.cols());
  if (!(h > 0.0)) throw DegenerateError("Silverman bandwidth is zero (constant centers)");
  return h;
}

inline KdeOracle make_kde_oracle(const Matrix& centers, const BoundingBox& box, double n0, double n1) {
  KdeOracle o{centers, silverman_bandwidth(centers), box, n0, n1};
  o.validate();
  return o;
}

// log of the KDE density at x (log-sum-exp over kernels).
inline double kde_log_density(const KdeOracle& o, std::span<const double> x) {
  const std::size_t n = o.centers.rows();
  const double inv = 1.0 / (2.0 * o.bandwidth * o.bandwidth);
  std::vector<double> e(n);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < n; ++r) {
    e[r] = -squared_distance(x, o.centers.row(r)) * inv;
    top = std::max(top, e[r]);
  }
  double s = 0.0;
  for (double v : e) s += std::exp(v - top);
  const double dim = static_cast<double>(o.centers.cols());
  return top + std::log(s) - std::log(static_cast<double>(n)) -
         0.5 * dim * std::log(2.0 * std::numbers::pi * o.bandwidth * o.bandwidth);
}

inline double kde_posterior(const KdeOracle& o, std::span<const double> x) {
  if (x.size() != o.centers.cols()) throw DimensionError("kde_posterior: point dimension mismatch");
  return posterior_from_logs(std::log(o.n1) + kde_log_density(o, x),
                             std::log(o.n0) - std::log(o.box.volume()));
}

// ---------------------------------------------------------------------------
// Spearman rank correlation

// 1-based ranks with ties replaced by their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw ValidationError("correlation undefined for a constant score list");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double rank_agreement(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("rank_agreement: lists differ in length");
  if (a.size() < 2) throw ValidationError("rank_agreement needs at least two scores");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

// ---------------------------------------------------------------------------
// 2-D seed-cluster fixture: positives from an anisotropic Gaussian blob,
// negatives uniform over a fixed box.

struct ClusterFixture {
  Matrix positives;
  Matrix negatives;
  BoundingBox box;

  Matrix training_points() const {
    Matrix out;
    for (std::size_t r = 0; r < positives.rows(); ++r) out.append_row(positives.row(r));
    for (std::size_t r = 0; r < negatives.rows(); ++r) out.append_row(negatives.row(r));
    return out;
  }
  std::vector<int> training_labels() const {
    std::vector<int> y(positives.rows(), 1);
    y.resize(positives.rows() + negatives.rows(), 0);
    return y;
  }
};

inline ClusterFixture make_cluster_fixture(std::size_t n1, std::size_t n0, std::uint64_t seed) {
  ClusterFixture fx;
  fx.box = BoundingBox{{-10.0, -10.0}, {10.0, 10.0}};
  Rng rng = make_rng(derive_seed(seed, {1}));
  fx.positives = Matrix(n1, 2);
  for (std::size_t r = 0; r < n1; ++r) {
    fx.positives(r, 0) = 2.0 + 1.5 * standard_normal(rng);
    fx.positives(r, 1) = -1.0 + 1.0 * standard_normal(rng);
  }
  fx.negatives = sample_uniform_negatives(fx.box, n0, derive_seed(seed, {2}));
  return fx;
}

// Probe points on a cols x rows lattice covering the box.
inline Matrix probe_lattice(const BoundingBox& box, std::size_t cols, std::size_t rows) {
  Matrix out(cols * rows, 2);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      out(r * cols + c, 0) = box.low[0] + box.width(0) * (static_cast<double>(c) + 0.5) / static_cast<double>(cols);
      out(r * cols + c, 1) = box.low[1] + box.width(1) * (static_cast<double>(r) + 0.5) / static_cast<double>(rows);
    }
  return out;
}

}  // namespace audex
