#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lecam/rng.hpp"
#include "lecam/sample_set.hpp"

namespace lecam {

/// Probability vector over a finite support.
class DiscreteDist {
 public:
  DiscreteDist() = default;
  explicit DiscreteDist(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw std::invalid_argument("DiscreteDist: empty support");
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw std::invalid_argument("DiscreteDist: negative or NaN probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("DiscreteDist: probabilities sum to " + std::to_string(total));
    }
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

/// Gaussian-kernel length scale.
class Bandwidth {
 public:
  explicit Bandwidth(double value) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("Bandwidth must be positive and finite");
  }
  double value() const { return value_; }

 private:
  double value_;
};

/// sup over events |P(A) - Q(A)|, i.e. half the L1 distance.
inline double tv_discrete(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_discrete: support sizes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

/// Half the integrated absolute density difference on [lo, hi], trapezoid rule.
inline double tv_continuous_1d(const std::function<double(double)>& p, const std::function<double(double)>& q,
                               double lo, double hi, std::size_t points = 20001) {
  if (points < 2 || !(hi > lo)) throw std::invalid_argument("tv_continuous_1d: bad grid");
  const double step = (hi - lo) / static_cast<double>(points - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + step * static_cast<double>(i);
    const double w = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
    sum += w * std::abs(p(x) - q(x));
  }
  return 0.5 * sum * step;
}

namespace detail {

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    d2 += diff * diff;
  }
  return d2;
}

/// Sum of k(x_i, x_j) over i < j.
inline double within_sum(const SampleSet& a, double inv_two_h2) {
  double sum = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = a.row(i);
    for (std::size_t j = i + 1; j < n; ++j) sum += std::exp(-squared_distance(xi, a.row(j)) * inv_two_h2);
  }
  return sum;
}

inline double cross_sum(const SampleSet& a, const SampleSet& b, double inv_two_h2) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto xi = a.row(i);
    for (std::size_t j = 0; j < b.size(); ++j) sum += std::exp(-squared_distance(xi, b.row(j)) * inv_two_h2);
  }
  return sum;
}

inline void require_same_dim(const SampleSet& a, const SampleSet& b, const char* who) {
  if (a.dim() != b.dim()) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace detail

inline double gaussian_kernel(std::span<const double> x, std::span<const double> y, Bandwidth bw) {
  if (x.size() != y.size()) throw std::invalid_argument("gaussian_kernel: dimension mismatch");
  const double h = bw.value();
  return std::exp(-detail::squared_distance(x, y) / (2.0 * h * h));
}

/// Unbiased (U-statistic) estimate of MMD^2 with a Gaussian kernel. Negative
/// values are returned as-is.
inline double mmd2_unbiased(const SampleSet& a, const SampleSet& b, Bandwidth bw) {
  detail::require_same_dim(a, b, "mmd2_unbiased");
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("mmd2_unbiased: need at least 2 points per set");
  const double inv = 1.0 / (2.0 * bw.value() * bw.value());
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  const double kaa = 2.0 * detail::within_sum(a, inv) / (n * (n - 1.0));
  const double kbb = 2.0 * detail::within_sum(b, inv) / (m * (m - 1.0));
  // The cross sum runs in a fixed order of the two sets so that swapping the
  // arguments gives a bit-identical result.
  const bool swap = std::lexicographical_compare(b.data().begin(), b.data().end(), a.data().begin(), a.data().end());
  const double kab = (swap ? detail::cross_sum(b, a, inv) : detail::cross_sum(a, b, inv)) / (n * m);
  return kaa + kbb - 2.0 * kab;
}

/// Linear-time MMD^2: averages h = k(x1,x2) + k(y1,y2) - k(x1,y2) - k(x2,y1)
/// over consecutive disjoint pairs.
inline double mmd2_linear(const SampleSet& a, const SampleSet& b, Bandwidth bw) {
  detail::require_same_dim(a, b, "mmd2_linear");
  if (a.size() != b.size()) throw std::invalid_argument("mmd2_linear: sets must have equal size");
  if (a.size() < 2 || a.size() % 2 != 0) throw std::invalid_argument("mmd2_linear: size must be even and >= 2");
  const double inv = 1.0 / (2.0 * bw.value() * bw.value());
  auto k = [inv](std::span<const double> x, std::span<const double> y) {
    return std::exp(-detail::squared_distance(x, y) * inv);
  };
  double sum = 0.0;
  const std::size_t pairs = a.size() / 2;
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto x1 = a.row(2 * p), x2 = a.row(2 * p + 1);
    const auto y1 = b.row(2 * p), y2 = b.row(2 * p + 1);
    sum += k(x1, x2) + k(y1, y2) - k(x1, y2) - k(x2, y1);
  }
  return sum / static_cast<double>(pairs);
}

/// Median pairwise Euclidean distance of the pooled set, computed on a seeded
/// subsample of at most `cap` points. Falls back to 1.0 when the median is 0.
inline Bandwidth median_heuristic(const SampleSet& a, const SampleSet& b, std::uint64_t seed = 0,
                                  std::size_t cap = 2000) {
  detail::require_same_dim(a, b, "median_heuristic");
  SampleSet pool = pooled(a, b);
  if (pool.size() < 2) throw std::invalid_argument("median_heuristic: need at least 2 pooled points");
  if (pool.size() > cap) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    RngStream rng(seed, 0x6d656469616eull);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    pool = pool.subset(idx);
  }
  const std::size_t n = pool.size();
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist.push_back(std::sqrt(detail::squared_distance(pool.row(i), pool.row(j))));
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return Bandwidth(median > 0.0 ? median : 1.0);
}

inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_correlation: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson_correlation: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw std::invalid_argument("pearson_correlation: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman_rank_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman_rank_correlation: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson_correlation(rx, ry);
}

}  // namespace lecam
