#pragma once

// Exact O(N^2) t-SNE. Produces the low-dimensional map in which all training
// and scoring happen, plus the diagnostics used to validate it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "audex/dataset.hpp"
#include "audex/error.hpp"
#include "audex/matrix.hpp"
#include "audex/parallel.hpp"
#include "audex/random.hpp"

namespace audex {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iteration = 250;
  double init_scale = 1e-4;
  double min_gain = 0.01;
  int output_dims = 2;
  std::uint64_t rng_seed = 0;
  unsigned threads = 1;
  // When positive, the unexaggerated KL is recorded every this many iterations.
  int checkpoint_every = 0;

  void validate(std::size_t n) const {
    if (!(perplexity > 0.0)) throw ConfigError("t-SNE perplexity must be positive");
    if (n >= 1 && perplexity > static_cast<double>(n - 1))
      throw ConfigError("t-SNE perplexity " + std::to_string(perplexity) +
                        " exceeds N-1 = " + std::to_string(n - 1));
    if (iterations < 250) throw ConfigError("t-SNE iterations must be at least 250");
    if (!(learning_rate > 0.0)) throw ConfigError("t-SNE learning rate must be positive");
    if (!(early_exaggeration > 0.0)) throw ConfigError("t-SNE early exaggeration must be positive");
    if (!(init_scale > 0.0)) throw ConfigError("t-SNE init_scale must be positive");
    if (output_dims < 1) throw ConfigError("t-SNE output dimension must be at least 1");
  }
};

struct TsneMeta {
  double perplexity = 0.0;
  int iterations = 0;
  std::uint64_t rng_seed = 0;
  double initial_kl = 0.0;
  double final_kl = 0.0;
  std::vector<std::pair<int, double>> kl_history;
};

// Coordinates row-aligned with the user base they were computed from.
struct Embedding {
  std::vector<UserId> ids;
  Matrix coords;
  TsneMeta meta;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t dim() const noexcept { return coords.cols(); }
};

inline constexpr double kPerplexityTolerance = 1e-5;
inline constexpr int kMaxBisectionSteps = 50;
inline constexpr double kAffinityFloor = 1e-12;

namespace detail {

// Calibrates one row. `dist` holds squared distances to every point with the
// self entry at index `self`; the output row gets zero there.
inline void calibrate_row(std::span<const double> dist, std::size_t self, double target,
                          std::span<double> out) {
  const std::size_t n = dist.size();
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == self) continue;
    dmin = std::min(dmin, dist[j]);
    dmax = std::max(dmax, dist[j]);
  }
  if (dmax == 0.0)
    throw DegenerateError("affinity row " + std::to_string(self) +
                          " is degenerate: all distances are zero");

  // Perplexity of the Gaussian row at precision beta. Distances are shifted
  // by the row minimum, which leaves the normalized row unchanged.
  auto perplexity_at = [&](double beta) {
    double z = 0.0, ws = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == self) continue;
      const double s = dist[j] - dmin;
      const double w = std::exp(-beta * s);
      z += w;
      ws += w * s;
    }
    return std::exp(std::log(z) + beta * ws / z);
  };

  // perplexity_at is non-increasing in beta with perplexity_at(0) = n - 1.
  double lo = 0.0, hi = 1.0;
  double p_hi = perplexity_at(hi);
  if (p_hi > target) {
    for (int i = 0; i < 2000 && p_hi > target && std::isfinite(hi); ++i) {
      lo = hi;
      hi *= 2.0;
      p_hi = perplexity_at(hi);
    }
  } else {
    double cand = hi;
    for (int i = 0; i < 2000; ++i) {
      cand *= 0.5;
      if (cand < 1e-300) {
        cand = 0.0;
        break;
      }
      if (perplexity_at(cand) > target) break;
      hi = cand;
    }
    lo = cand;
  }

  double beta = hi;
  double best_beta = hi, best_err = std::abs(p_hi - target);
  if (std::abs(perplexity_at(lo) - target) < best_err) {
    best_beta = lo;
    best_err = std::abs(perplexity_at(lo) - target);
  }
  for (int step = 0; step < kMaxBisectionSteps && best_err > 1e-7; ++step) {
    beta = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    const double p = perplexity_at(beta);
    const double err = std::abs(p - target);
    if (err < best_err) {
      best_err = err;
      best_beta = beta;
    }
    if (p > target)
      lo = beta;
    else
      hi = beta;
  }

  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == self) {
      out[j] = 0.0;
      continue;
    }
    out[j] = std::exp(-best_beta * (dist[j] - dmin));
    z += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= z;
}

// Neumaier-compensated sum.
struct CompensatedSum {
  double sum = 0.0, c = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      c += (sum - t) + v;
    else
      c += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace detail

// Row-stochastic matrix of Gaussian conditional affinities p_{j|i}, each row
// calibrated to the target perplexity.
inline Matrix conditional_affinities(const Matrix& x, double perplexity, unsigned threads = 1) {
  const std::size_t n = x.rows();
  if (n < 3) throw ValidationError("conditional_affinities needs at least 3 points");
  if (!(perplexity > 0.0) || perplexity > static_cast<double>(n - 1))
    throw ValidationError("perplexity must lie in (0, N-1]");
  Matrix p(n, n);
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<double> dist(n);
    for (std::size_t j = 0; j < n; ++j) dist[j] = j == i ? 0.0 : squared_distance(x.row(i), x.row(j));
    detail::calibrate_row(dist, i, perplexity, p.row(i));
  });
  return p;
}

// Perplexity 2^H of one probability row, H in bits (equivalently e^H in nats).
inline double row_perplexity(std::span<const double> row) {
  double h = 0.0;
  for (double v : row)
    if (v > 0.0) h -= v * std::log(v);
  return std::exp(h);
}

// Joint affinities p_ij = (p_{j|i} + p_{i|j}) / 2N with off-diagonal entries
// floored at kAffinityFloor and the remaining mass rescaled so that the
// matrix still sums to one. The diagonal stays zero.
inline Matrix symmetrize(const Matrix& conditional) {
  const std::size_t n = conditional.rows();
  if (n == 0 || conditional.cols() != n) throw DimensionError("symmetrize needs a square matrix");
  Matrix p(n, n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = (conditional(i, j) + conditional(j, i)) / denom;
      p(i, j) = v;
      p(j, i) = v;
    }

  std::vector<char> floored(n * n, 0);
  for (int pass = 0; pass < 32; ++pass) {
    std::size_t n_floor = 0;
    detail::CompensatedSum free_mass;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!floored[i * n + j] && p(i, j) < kAffinityFloor) floored[i * n + j] = 1;
        if (floored[i * n + j])
          ++n_floor;
        else
          free_mass.add(p(i, j));
      }
    const double target_free = 0.5 - static_cast<double>(n_floor) * kAffinityFloor;
    const double scale = target_free / free_mass.value();
    bool stable = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double v = floored[i * n + j] ? kAffinityFloor : p(i, j) * scale;
        if (!floored[i * n + j] && v < kAffinityFloor) stable = false;
        p(i, j) = v;
        p(j, i) = v;
      }
    if (stable && std::abs(scale - 1.0) < 1e-15) break;
  }
  return p;
}

namespace detail {

// Sum over i != j of the Student-t kernel 1 / (1 + |y_i - y_j|^2), in a
// fixed row-major order.
inline double student_t_normalizer(const Matrix& y) {
  const std::size_t n = y.rows();
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double zi = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) zi += 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
    z += zi;
  }
  return z;
}

}  // namespace detail

// KL(P || Q) with Q the normalized Student-t (one degree of freedom) kernel
// over the coordinates. q is floored at kAffinityFloor like P.
inline double kl_divergence(const Matrix& p, const Matrix& coords) {
  const std::size_t n = p.rows();
  if (coords.rows() != n) throw DimensionError("kl_divergence: P and coords disagree on N");
  const double z = detail::student_t_normalizer(coords);
  detail::CompensatedSum kl;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double pij = p(i, j);
      if (pij <= 0.0) continue;
      const double q = std::max(1.0 / (1.0 + squared_distance(coords.row(i), coords.row(j))) / z,
                                kAffinityFloor);
      kl.add(pij * std::log(pij / q));
    }
  return std::max(0.0, kl.value());
}

// Gradient descent on KL(P || Q) with early exaggeration, momentum and
// per-coordinate adaptive gains.
inline Embedding run_tsne(const Matrix& x, const TsneConfig& cfg) {
  const std::size_t n = x.rows();
  if (n < 10) throw ValidationError("run_tsne needs at least 10 points, got " + std::to_string(n));
  cfg.validate(n);
  for (double v : x.data())
    if (!std::isfinite(v)) throw ValidationError("run_tsne input contains non-finite values");

  const Matrix p = symmetrize(conditional_affinities(x, cfg.perplexity, cfg.threads));
  const std::size_t e = static_cast<std::size_t>(cfg.output_dims);

  Matrix y(n, e);
  Rng rng = make_rng(cfg.rng_seed);
  for (double& v : y.data()) v = cfg.init_scale * standard_normal(rng);

  Embedding out;
  out.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.ids[i] = static_cast<UserId>(i);
  out.meta.perplexity = cfg.perplexity;
  out.meta.iterations = cfg.iterations;
  out.meta.rng_seed = cfg.rng_seed;
  out.meta.initial_kl = kl_divergence(p, y);

  Matrix update(n, e), gains(n, e, 1.0), attract(n, e), repulse(n, e);
  std::vector<double> row_z(n);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double exaggeration = it < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum =
        it < cfg.momentum_switch_iteration ? cfg.initial_momentum : cfg.final_momentum;

    // grad_i = 4 sum_j (p_ij - num_ij / Z) num_ij (y_i - y_j)
    //        = 4 (sum_j p_ij num_ij d_ij - (1/Z) sum_j num_ij^2 d_ij)
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      auto yi = y.row(i);
      auto a = attract.row(i);
      auto r = repulse.row(i);
      std::fill(a.begin(), a.end(), 0.0);
      std::fill(r.begin(), r.end(), 0.0);
      double zi = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        auto yj = y.row(j);
        const double num = 1.0 / (1.0 + squared_distance(yi, yj));
        const double pa = exaggeration * p(i, j) * num;
        const double rn = num * num;
        for (std::size_t c = 0; c < e; ++c) {
          const double diff = yi[c] - yj[c];
          a[c] += pa * diff;
          r[c] += rn * diff;
        }
        zi += num;
      }
      row_z[i] = zi;
    });
    double z = 0.0;
    for (double v : row_z) z += v;

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < e; ++c) {
        const double g = 4.0 * (attract(i, c) - repulse(i, c) / z);
        if (!std::isfinite(g))
          throw DivergenceError("t-SNE gradient became non-finite at iteration " +
                                    std::to_string(it),
                                it);
        double& gain = gains(i, c);
        double& u = update(i, c);
        gain = (g > 0.0) != (u > 0.0) ? gain + 0.2 : gain * 0.8;
        gain = std::max(gain, cfg.min_gain);
        u = momentum * u - cfg.learning_rate * gain * g;
        y(i, c) += u;
      }
    }
    for (std::size_t c = 0; c < e; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
    }
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0)
      out.meta.kl_history.emplace_back(it + 1, kl_divergence(p, y));
  }
  for (double v : y.data())
    if (!std::isfinite(v))
      throw DivergenceError("t-SNE produced non-finite coordinates", cfg.iterations);

  out.meta.final_kl = kl_divergence(p, y);
  out.coords = std::move(y);
  return out;
}

inline Embedding run_tsne(const UserBase& base, const TsneConfig& cfg) {
  Embedding emb = run_tsne(base.features, cfg);
  emb.ids = base.ids;
  return emb;
}

// Mean fraction of each point's k nearest neighbours in `x` that are also
// among its k nearest neighbours in `coords`. Ties go to the smaller index.
inline double neighborhood_preservation(const Matrix& x, const Matrix& coords, std::size_t k,
                                        unsigned threads = 1) {
  const std::size_t n = x.rows();
  if (coords.rows() != n) throw DimensionError("neighborhood_preservation: row counts differ");
  if (k == 0 || k >= n) throw ValidationError("neighborhood_preservation needs 0 < k < N");

  auto knn = [k, n](const Matrix& m, std::size_t i) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d.emplace_back(squared_distance(m.row(i), m.row(j)), j);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t t = 0; t < k; ++t) out.push_back(d[t].second);
    std::sort(out.begin(), out.end());
    return out;
  };

  std::vector<double> frac(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto a = knn(x, i);
    const auto b = knn(coords, i);
    std::vector<std::size_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    frac[i] = static_cast<double>(common.size()) / static_cast<double>(k);
  });
  double s = 0.0;
  for (double f : frac) s += f;
  return s / static_cast<double>(n);
}

// Writes the key=value sidecar that accompanies a persisted embedding.
inline std::string format_tsne_meta(const TsneMeta& meta) {
  std::string out;
  out += "perplexity=" + format_double(meta.perplexity) + "\n";
  out += "iterations=" + std::to_string(meta.iterations) + "\n";
  out += "rng_seed=" + std::to_string(meta.rng_seed) + "\n";
  out += "initial_kl=" + format_double(meta.initial_kl) + "\n";
  out += "final_kl=" + format_double(meta.final_kl) + "\n";
  return out;
}

inline Embedding embedding_from_table(MatrixTable table) {
  if (table.ids.empty()) throw ValidationError("embedding table is empty");
  Embedding emb;
  emb.ids = std::move(table.ids);
  emb.coords = std::move(table.matrix);
  return emb;
}

}  // namespace audex
