#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lecam/deficiency.hpp"
#include "lecam/divergences.hpp"
#include "lecam/rng.hpp"
#include "lecam/sample_set.hpp"

namespace lecam::regression {

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;

  double predict(std::span<const double> x) const {
    double v = intercept;
    for (std::size_t k = 0; k < weights.size(); ++k) v += weights[k] * x[k];
    return v;
  }
};

namespace detail {

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-300) throw std::runtime_error("solve: singular system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace detail

/// Minimizes mean (y - w.x - b)^2 + alpha * |w|^2; the intercept is not penalized.
inline LinearModel fit_ridge(const SampleSet& x, const std::vector<double>& y, double alpha) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_ridge: need matching x, y with >= 2 rows");
  if (!(alpha >= 0.0)) throw std::invalid_argument("fit_ridge: alpha must be >= 0");
  const std::size_t n = x.size(), d = x.dim();
  std::vector<double> mx(d, 0.0);
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) mx[k] += x(i, k);
    my += y[i];
  }
  for (double& m : mx) m /= static_cast<double>(n);
  my /= static_cast<double>(n);
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
  std::vector<double> b(d, 0.0);
  std::vector<double> xc(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) xc[k] = x(i, k) - mx[k];
    const double yc = y[i] - my;
    for (std::size_t k = 0; k < d; ++k) {
      b[k] += xc[k] * yc;
      for (std::size_t l = k; l < d; ++l) a[k][l] += xc[k] * xc[l];
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t l = k; l < d; ++l) {
      a[k][l] /= static_cast<double>(n);
      a[l][k] = a[k][l];
    }
    a[k][k] += alpha;
    b[k] /= static_cast<double>(n);
  }
  LinearModel m;
  m.weights = detail::solve(std::move(a), std::move(b));
  m.intercept = my;
  for (std::size_t k = 0; k < d; ++k) m.intercept -= m.weights[k] * mx[k];
  return m;
}

inline double mse(const LinearModel& m, const SampleSet& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - m.predict(x.row(i));
    s += r * r;
  }
  return s / static_cast<double>(x.size());
}

/// Diagonal linear encoder followed by a linear head.
struct EncodedModel {
  std::vector<double> scale;  // encoder c
  LinearModel head;

  double mse(const SampleSet& x, const std::vector<double>& y) const {
    return regression::mse(head, lecam::detail::scale_columns(x, scale), y);
  }
};

struct InvariantConfig {
  double mmd_weight = 1.0;
  double ridge_alpha = 0.1;
  std::size_t steps = 400;
  double learning_rate = 0.05;
  std::size_t batch_size = 256;
  std::uint64_t seed = 42;
};

/// Learns encoder scales c in [0, 1] minimizing
///   min_head [source MSE of head(c * x) + alpha |w|^2] + weight * MMD^2(c * x_source, c * x_target)
/// by projected gradient descent from c = 1. The head is re-solved in closed
/// form at every step, so its contribution to the gradient is the partial
/// derivative at the optimal head. The MMD bandwidth is the median heuristic
/// of the unscaled pools, held fixed.
inline EncodedModel fit_invariant_encoder(const SampleSet& source, const std::vector<double>& y,
                                          const SampleSet& target, const InvariantConfig& cfg) {
  if (source.dim() != target.dim()) throw std::invalid_argument("fit_invariant_encoder: dimension mismatch");
  const std::size_t n = source.size(), d = source.dim();
  const double h = median_heuristic(source, target, cfg.seed).value();
  const double invh2 = 1.0 / (h * h), inv2h2 = 0.5 * invh2;
  RngStream rng(cfg.seed, 0x656e63);
  EncodedModel model{std::vector<double>(d, 1.0), {}};

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const SampleSet f = lecam::detail::scale_columns(source, model.scale);
    model.head = fit_ridge(f, y, cfg.ridge_alpha);
    std::vector<double> grad(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - model.head.predict(f.row(i));
      for (std::size_t k = 0; k < d; ++k) grad[k] -= 2.0 * r * model.head.weights[k] * source(i, k) / static_cast<double>(n);
    }
    if (cfg.mmd_weight > 0.0) {
      const auto bi = lecam::detail::sample_without_replacement(source.size(), cfg.batch_size, rng);
      const auto bj = lecam::detail::sample_without_replacement(target.size(), cfg.batch_size, rng);
      const SampleSet xs = source.subset(bi), xt = target.subset(bj);
      const SampleSet zs = lecam::detail::scale_columns(xs, model.scale), zt = lecam::detail::scale_columns(xt, model.scale);
      std::vector<double> g(d, 0.0);
      // Within-set terms enter with + and the cross term with -2.
      auto accumulate = [&](const SampleSet& za, const SampleSet& xa, const SampleSet& zb, const SampleSet& xb, bool same,
                            double coef) {
        for (std::size_t i = 0; i < za.size(); ++i) {
          for (std::size_t j = same ? i + 1 : 0; j < zb.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = za(i, k) - zb(j, k);
              d2 += diff * diff;
            }
            const double kv = std::exp(-d2 * inv2h2);
            for (std::size_t k = 0; k < d; ++k) g[k] -= coef * kv * (za(i, k) - zb(j, k)) * (xa(i, k) - xb(j, k)) * invh2;
          }
        }
      };
      const double ns = static_cast<double>(zs.size()), nt = static_cast<double>(zt.size());
      accumulate(zs, xs, zs, xs, true, 2.0 / (ns * (ns - 1.0)));
      accumulate(zt, xt, zt, xt, true, 2.0 / (nt * (nt - 1.0)));
      accumulate(zs, xs, zt, xt, false, -2.0 / (ns * nt));
      for (std::size_t k = 0; k < d; ++k) grad[k] += cfg.mmd_weight * g[k];
    }
    for (std::size_t k = 0; k < d; ++k) model.scale[k] = std::clamp(model.scale[k] - cfg.learning_rate * grad[k], 0.0, 1.0);
  }
  model.head = fit_ridge(lecam::detail::scale_columns(source, model.scale), y, cfg.ridge_alpha);
  return model;
}

/// Trains on source inputs pushed through x + sigma * eps, `copies` draws per
/// point, with the encoder left at identity.
inline LinearModel fit_on_simulated(const SampleSet& source, const std::vector<double>& y, const std::vector<double>& sigma,
                                    double ridge_alpha, std::size_t copies, std::uint64_t seed) {
  RngStream rng(seed, 0x73696d);
  SampleSet x(source.dim());
  std::vector<double> yy;
  x.reserve(source.size() * copies);
  std::vector<double> row(source.dim());
  for (std::size_t c = 0; c < copies; ++c) {
    for (std::size_t i = 0; i < source.size(); ++i) {
      for (std::size_t k = 0; k < source.dim(); ++k) row[k] = source(i, k) + sigma[sigma.size() == 1 ? 0 : k] * rng.normal();
      x.push_back(row);
      yy.push_back(y[i]);
    }
  }
  return fit_ridge(x, yy, ridge_alpha);
}

}  // namespace lecam::regression
