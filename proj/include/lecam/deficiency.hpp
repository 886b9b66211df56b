#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lecam/divergences.hpp"
#include "lecam/markov_kernels.hpp"
#include "lecam/rng.hpp"
#include "lecam/sample_set.hpp"

namespace lecam {

enum class InitMode { Zeros, Random, MomentMatched };

struct OptimizerConfig {
  std::size_t steps = 300;
  /// Step size in bandwidth units: sigma moves by lr * h^2 * grad.
  double learning_rate = 1.0;
  std::size_t batch_size = 256;
  std::size_t restarts = 3;
  InitMode init = InitMode::MomentMatched;
  std::uint64_t seed = 42;
  /// Points per domain held out for checkpoint evaluation.
  std::size_t eval_size = 1000;
  std::size_t eval_every = 25;
  /// Fixed bandwidth; when unset the median heuristic of the raw pool is used.
  std::optional<double> bandwidth;
  /// Rescale each coordinate by its pooled robust spread before comparing sets.
  bool per_dim_scaling = false;

  void validate() const {
    if (steps == 0 || batch_size < 2 || restarts == 0 || eval_size < 2 || eval_every == 0 || !(learning_rate > 0.0))
      throw std::invalid_argument("OptimizerConfig: all sizes and the learning rate must be positive");
  }
};

struct TracePoint {
  std::size_t iteration = 0;
  double value = 0.0;
};

struct DeficiencyEstimate {
  KernelSpec kernel;
  double divergence_final = 0.0;
  std::vector<TracePoint> trace;
  bool converged = false;
  double bandwidth = 1.0;
  /// Final divergence of every restart, in restart order.
  std::vector<double> restart_finals;

  const std::vector<double>& psi_star() const { return kernel.params; }

  std::vector<double> best_so_far() const {
    std::vector<double> out;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : trace) out.push_back(best = std::min(best, t.value));
    return out;
  }
};

class EstimationError : public std::runtime_error {
 public:
  EstimationError(const std::string& what, std::vector<TracePoint> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<TracePoint>& trace() const { return trace_; }

 private:
  std::vector<TracePoint> trace_;
};

inline nlohmann::json to_json(const DeficiencyEstimate& e) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : e.trace) trace.push_back({t.iteration, t.value});
  return {{"psi_star", e.kernel.params},
          {"divergence_final", e.divergence_final},
          {"trace", trace},
          {"converged", e.converged},
          {"family", family_name(e.kernel.family)},
          {"bandwidth", e.bandwidth},
          {"restart_finals", e.restart_finals}};
}

/// Deficiency proxy scale.
inline double proxy_distance(double mmd2) { return std::sqrt(std::max(mmd2, 0.0)); }

namespace detail {

/// Rows in lexicographic order.
inline SampleSet sorted_rows(const SampleSet& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    const auto a = s.row(i), b = s.row(j);
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  });
  return s.subset(idx);
}

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? s / static_cast<double>(v.size() - 1) : 0.0;
}

/// 1.4826 * median absolute deviation; 1.0 when degenerate.
inline double robust_scale(std::vector<double> v) {
  auto median = [](std::vector<double>& w) {
    const std::size_t mid = w.size() / 2;
    std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(mid), w.end());
    return w[mid];
  };
  const double med = median(v);
  for (double& x : v) x = std::abs(x - med);
  const double mad = 1.4826 * median(v);
  return mad > 0.0 ? mad : 1.0;
}

inline SampleSet standard_normal_matrix(std::size_t n, std::size_t dim, RngStream& rng) {
  SampleSet eps(n, dim);
  for (double& v : eps.data()) v = rng.normal();
  return eps;
}

/// MMD^2 between x + sigma * eps and y, with its pathwise gradient in sigma.
/// `grad` has one entry per sigma parameter (one when tied).
inline double mmd2_with_sigma_gradient(const SampleSet& x, const SampleSet& eps, const SampleSet& y,
                                       const std::vector<double>& sigma, double h, std::vector<double>& grad) {
  const std::size_t n = x.size(), m = y.size(), d = x.dim();
  const bool tied = sigma.size() == 1;
  const double inv2h2 = 1.0 / (2.0 * h * h);
  const double invh2 = 1.0 / (h * h);
  SampleSet z = x;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) z(i, k) += sigma[tied ? 0 : k] * eps(i, k);

  std::vector<double> g_within(d, 0.0), g_cross(d, 0.0);
  double s_within = 0.0, s_cross = 0.0, s_target = 0.0;
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        diff[k] = z(i, k) - z(j, k);
        d2 += diff[k] * diff[k];
      }
      const double kv = std::exp(-d2 * inv2h2);
      s_within += kv;
      for (std::size_t k = 0; k < d; ++k) g_within[k] -= kv * diff[k] * (eps(i, k) - eps(j, k)) * invh2;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        diff[k] = z(i, k) - y(j, k);
        d2 += diff[k] * diff[k];
      }
      const double kv = std::exp(-d2 * inv2h2);
      s_cross += kv;
      for (std::size_t k = 0; k < d; ++k) g_cross[k] -= kv * diff[k] * eps(i, k) * invh2;
    }
  }
  s_target = within_sum(y, inv2h2);
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double w_norm = 2.0 / (nn * (nn - 1.0));
  const double c_norm = 2.0 / (nn * mm);
  grad.assign(sigma.size(), 0.0);
  for (std::size_t k = 0; k < d; ++k) grad[tied ? 0 : k] += w_norm * g_within[k] - c_norm * g_cross[k];
  return w_norm * s_within + 2.0 * s_target / (mm * (mm - 1.0)) - c_norm * s_cross;
}

inline SampleSet scale_columns(const SampleSet& x, const std::vector<double>& inv_scale) {
  SampleSet out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t k = 0; k < out.dim(); ++k) out(i, k) *= inv_scale[k];
  return out;
}

inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// Estimates the directional deficiency of `source` with respect to `target`:
/// the smallest achievable MMD between the kernel pushforward of the source
/// and the target, over parameters of the family given by `family`.
///
/// AdditiveGaussian uses pathwise gradients through z = x + sigma * eps with
/// fresh noise each step; other families fall back to central finite
/// differences. The bandwidth is frozen before optimization. Every
/// `eval_every` steps the current parameters are scored on held-out points
/// with a fixed noise draw; the best checkpoint over all restarts is returned.
inline DeficiencyEstimate estimate_deficiency(const SampleSet& source, const SampleSet& target,
                                              const KernelSpec& family, const OptimizerConfig& cfg) {
  cfg.validate();
  if (source.dim() != target.dim()) throw std::invalid_argument("estimate_deficiency: dimension mismatch");
  if (source.size() < 2 || target.size() < 2) throw std::invalid_argument("estimate_deficiency: need >= 2 points per set");
  for (const SampleSet* s : {&source, &target})
    for (double v : s->data())
      if (!std::isfinite(v)) throw EstimationError("estimate_deficiency: input contains NaN or infinite values", {});
  const std::size_t dim = source.dim();

  KernelSpec shape = family;
  if (shape.family == KernelFamily::AdditiveGaussian && shape.params.empty()) shape.params.assign(dim, 0.0);
  shape.validate();
  shape.require_dim(dim);
  const std::size_t n_params = shape.params.size();
  const bool pathwise = shape.family == KernelFamily::AdditiveGaussian;

  // Working coordinates.
  std::vector<double> col_scale(dim, 1.0), inv_scale(dim, 1.0);
  if (cfg.per_dim_scaling) {
    const SampleSet pool = pooled(source, target);
    for (std::size_t k = 0; k < dim; ++k) {
      col_scale[k] = detail::robust_scale(pool.column(k));
      inv_scale[k] = 1.0 / col_scale[k];
    }
  }
  // Rows are put in sorted order so that splits and noise draws do not depend
  // on the order the samples arrived in.
  const SampleSet src = detail::sorted_rows(cfg.per_dim_scaling ? detail::scale_columns(source, inv_scale) : source);
  const SampleSet tgt = detail::sorted_rows(cfg.per_dim_scaling ? detail::scale_columns(target, inv_scale) : target);
  const double h = cfg.bandwidth ? Bandwidth(*cfg.bandwidth).value() : median_heuristic(src, tgt, cfg.seed).value();

  // Held-out split.
  RngStream split_rng(cfg.seed, 1);
  auto split = [&](const SampleSet& s, SampleSet& train, SampleSet& eval) {
    const std::size_t n_eval = s.size() >= 2 * cfg.eval_size ? cfg.eval_size : s.size();
    auto perm = detail::sample_without_replacement(s.size(), s.size(), split_rng);
    std::vector<std::size_t> ev(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_eval));
    std::vector<std::size_t> tr = n_eval == s.size() ? perm : std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(n_eval), perm.end());
    std::sort(ev.begin(), ev.end());
    std::sort(tr.begin(), tr.end());
    eval = s.subset(ev);
    train = s.subset(tr);
  };
  SampleSet src_train, src_eval, tgt_train, tgt_eval;
  split(src, src_train, src_eval);
  split(tgt, tgt_train, tgt_eval);
  RngStream eval_rng(cfg.seed, 2);
  const SampleSet eval_eps = detail::standard_normal_matrix(src_eval.size(), dim, eval_rng);

  // Parameters live in working units; convert to data units on output.
  auto to_data_units = [&](std::vector<double> p) {
    if (pathwise && !shape.tied())
      for (std::size_t k = 0; k < dim; ++k) p[k] *= col_scale[k];
    if (pathwise && shape.tied()) {
      const double mean_scale = detail::mean_of(col_scale);
      p[0] *= mean_scale;
    }
    if (shape.family == KernelFamily::Quantization && cfg.per_dim_scaling) p[0] *= detail::mean_of(col_scale);
    return p;
  };

  auto pushforward = [&](const std::vector<double>& p, const SampleSet& x, const SampleSet& eps) {
    KernelSpec k{shape.family, p};
    if (pathwise) return pathwise_apply(k, x, eps);
    RngStream unused(cfg.seed, 3);
    return apply_kernel(k, x, unused);
  };

  auto evaluate = [&](const std::vector<double>& p) {
    return proxy_distance(mmd2_unbiased(pushforward(p, src_eval, eval_eps), tgt_eval, Bandwidth(h)));
  };

  auto project = [&](std::vector<double>& p) {
    for (double& v : p) v = shape.family == KernelFamily::Quantization ? std::max(v, 1e-9) : std::max(v, 0.0);
  };

  auto initial_params = [&](std::size_t restart, RngStream& rng) {
    std::vector<double> p = shape.params;
    if (n_params == 0) return p;
    const InitMode mode = restart == 0 ? cfg.init : InitMode::Random;
    if (!pathwise) {
      if (mode == InitMode::Random)
        for (double& v : p) v *= rng.uniform(0.5, 1.5);
      return p;
    }
    std::vector<double> var_gap(dim), spread(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto sc = src_train.column(k), tc = tgt_train.column(k);
      var_gap[k] = detail::variance_of(tc) - detail::variance_of(sc);
      spread[k] = std::sqrt(detail::variance_of(sc) + detail::variance_of(tc));
    }
    switch (mode) {
      case InitMode::Zeros:
        std::fill(p.begin(), p.end(), 0.0);
        break;
      case InitMode::MomentMatched:
        if (shape.tied()) p[0] = std::sqrt(std::max(detail::mean_of(var_gap), 0.0));
        else
          for (std::size_t k = 0; k < dim; ++k) p[k] = std::sqrt(std::max(var_gap[k], 0.0));
        break;
      case InitMode::Random:
        if (shape.tied()) p[0] = rng.uniform(0.0, detail::mean_of(spread));
        else
          for (std::size_t k = 0; k < dim; ++k) p[k] = rng.uniform(0.0, spread[k]);
        break;
    }
    return p;
  };

  DeficiencyEstimate best;
  best.divergence_final = std::numeric_limits<double>::infinity();
  best.bandwidth = h;

  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    RngStream rng = RngStream(cfg.seed, 16).derive(r);
    std::vector<double> psi = initial_params(r, rng);
    std::vector<TracePoint> trace;
    std::vector<double> best_psi = psi;
    double best_value = std::numeric_limits<double>::infinity();
    double lr = cfg.learning_rate;

    auto checkpoint = [&](std::size_t it) {
      const double v = evaluate(psi);
      if (!std::isfinite(v)) throw EstimationError("estimate_deficiency: divergence is NaN", trace);
      trace.push_back({it, v});
      if (v < best_value) {
        best_value = v;
        best_psi = psi;
      }
    };
    checkpoint(0);

    for (std::size_t it = 1; n_params > 0 && it <= cfg.steps; ++it) {
      std::vector<double> grad;
      double value = 0.0;
      bool ok = false;
      for (int attempt = 0; attempt <= 5 && !ok; ++attempt) {
        const auto bi = detail::sample_without_replacement(src_train.size(), cfg.batch_size, rng);
        const auto bj = detail::sample_without_replacement(tgt_train.size(), cfg.batch_size, rng);
        const SampleSet xb = src_train.subset(bi), yb = tgt_train.subset(bj);
        if (pathwise) {
          const SampleSet eps = detail::standard_normal_matrix(xb.size(), dim, rng);
          value = detail::mmd2_with_sigma_gradient(xb, eps, yb, psi, h, grad);
          for (double& g : grad) g *= h * h;
        } else {
          grad.assign(n_params, 0.0);
          const double base_step = std::pow(0.5, attempt) * 1e-3;
          for (std::size_t p = 0; p < n_params; ++p) {
            const double step = base_step * (1.0 + std::abs(psi[p]));
            auto up = psi, down = psi;
            up[p] += step;
            down[p] = std::max(down[p] - step, 1e-9);
            const SampleSet none;
            const double fu = mmd2_unbiased(pushforward(up, xb, none), yb, Bandwidth(h));
            const double fd = mmd2_unbiased(pushforward(down, xb, none), yb, Bandwidth(h));
            grad[p] = (fu - fd) / (up[p] - down[p]);
          }
          value = mmd2_unbiased(pushforward(psi, xb, SampleSet{}), yb, Bandwidth(h));
        }
        if (std::isnan(value)) throw EstimationError("estimate_deficiency: divergence is NaN", trace);
        ok = std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
        if (!ok) lr *= 0.5;
      }
      if (!ok) throw EstimationError("estimate_deficiency: non-finite gradient after 5 retries", trace);
      for (std::size_t p = 0; p < n_params; ++p) psi[p] -= lr * grad[p];
      project(psi);
      if (it % cfg.eval_every == 0 || it == cfg.steps) checkpoint(it);
    }

    best.restart_finals.push_back(best_value);
    if (best_value < best.divergence_final) {
      best.divergence_final = best_value;
      best.kernel = KernelSpec{shape.family, to_data_units(best_psi)};
      best.trace = trace;
      const double last = trace.back().value;
      best.converged = last <= best_value + 0.01 + 0.1 * best_value;
    }
  }
  return best;
}

struct DirectionalGap {
  DeficiencyEstimate forward;
  DeficiencyEstimate reverse;
};

/// Runs the estimator source -> target and target -> source with independent seeds.
inline DirectionalGap directional_gap(const SampleSet& source, const SampleSet& target, const KernelSpec& family,
                                      const OptimizerConfig& cfg) {
  OptimizerConfig rev = cfg;
  rev.seed = RngStream(cfg.seed, 99).engine()();
  return {estimate_deficiency(source, target, family, cfg), estimate_deficiency(target, source, family, rev)};
}

/// Zero-deficiency check for a sufficient statistic. Each replicate draws
/// theta ~ U[-1, 1] and X = n_obs iid N(theta, 1). The simulator sees only the
/// sample mean t and returns t + R with R ~ N(0, I - J/n), i.e. a draw of X
/// given T = t. Returns mmd2_unbiased between simulated and true draws.
/// `wrong_kernel` replaces R with N(0, I) as a negative control.
inline double sufficiency_check(std::size_t n_obs, std::size_t n_reps, std::uint64_t seed, bool wrong_kernel = false) {
  if (n_obs < 1) throw std::invalid_argument("sufficiency_check: n_obs must be >= 1");
  if (n_reps < 2) throw std::invalid_argument("sufficiency_check: n_reps must be >= 2");
  RngStream truth_rng(seed, 10), sim_rng(seed, 11);
  SampleSet truth(n_obs), simulated(n_obs);
  truth.reserve(n_reps);
  simulated.reserve(n_reps);
  std::vector<double> x(n_obs);
  for (std::size_t r = 0; r < n_reps; ++r) {
    const double theta = truth_rng.uniform(-1.0, 1.0);
    for (double& v : x) v = theta + truth_rng.normal();
    truth.push_back(x);
  }
  for (std::size_t r = 0; r < n_reps; ++r) {
    const double theta = sim_rng.uniform(-1.0, 1.0);
    double t = 0.0;
    for (std::size_t i = 0; i < n_obs; ++i) t += theta + sim_rng.normal();
    t /= static_cast<double>(n_obs);
    for (double& v : x) v = sim_rng.normal();
    const double centre = wrong_kernel ? 0.0 : detail::mean_of(x);
    for (double& v : x) v = t + (v - centre);
    simulated.push_back(x);
  }
  return mmd2_unbiased(simulated, truth, median_heuristic(simulated, truth, seed));
}

// ---------------------------------------------------------------------------
// Discrete experiments and the risk-transfer bound.

using Matrix = std::vector<std::vector<double>>;

struct DiscreteExperiment {
  std::vector<DiscreteDist> rows;  // one distribution per parameter value

  std::size_t parameters() const { return rows.size(); }
  std::size_t outcomes() const { return rows.empty() ? 0 : rows.front().size(); }

  void validate() const {
    if (rows.empty()) throw std::invalid_argument("DiscreteExperiment: no parameter values");
    for (const auto& r : rows)
      if (r.size() != outcomes()) throw std::invalid_argument("DiscreteExperiment: rows differ in support size");
  }
};

inline void require_stochastic(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.size() != rows) throw std::invalid_argument(std::string(what) + ": wrong number of rows");
  for (const auto& r : m) {
    if (r.size() != cols) throw std::invalid_argument(std::string(what) + ": wrong number of columns");
    double s = 0.0;
    for (double v : r) {
      if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
  }
}

/// Distribution of K applied to p: (pK)_z = sum_x p_x K(x, z).
inline std::vector<double> push_discrete(const DiscreteDist& p, const Matrix& k) {
  std::vector<double> out(k.front().size(), 0.0);
  for (std::size_t x = 0; x < p.size(); ++x)
    for (std::size_t z = 0; z < out.size(); ++z) out[z] += p[x] * k[x][z];
  return out;
}

struct RiskTransferResult {
  double lhs = 0.0;      // sup_theta risk of the composite rule in e1
  double rhs = 0.0;      // sup_theta risk of rule2 in e2
  double epsilon = 0.0;  // sup_theta TV(K P_theta, Q_theta)
  bool holds = false;
};

/// Exact check of sup risk(e1, rule2 after K) <= sup risk(e2, rule2) + B * eps.
/// `rule2` maps each e2 outcome to a distribution over actions; `loss` is
/// |Theta| x |A| with entries in [0, bound].
inline RiskTransferResult verify_risk_transfer(const DiscreteExperiment& e1, const DiscreteExperiment& e2,
                                               const Matrix& kernel, const Matrix& rule2, const Matrix& loss,
                                               double bound) {
  e1.validate();
  e2.validate();
  if (e1.parameters() != e2.parameters()) throw std::invalid_argument("verify_risk_transfer: parameter sets differ");
  require_stochastic(kernel, e1.outcomes(), e2.outcomes(), "kernel");
  if (rule2.empty()) throw std::invalid_argument("verify_risk_transfer: empty decision rule");
  const std::size_t actions = rule2.front().size();
  require_stochastic(rule2, e2.outcomes(), actions, "decision rule");
  if (loss.size() != e1.parameters()) throw std::invalid_argument("verify_risk_transfer: loss has wrong row count");
  for (const auto& row : loss) {
    if (row.size() != actions) throw std::invalid_argument("verify_risk_transfer: loss has wrong column count");
    for (double v : row)
      if (v < 0.0 || v > bound) throw std::invalid_argument("verify_risk_transfer: loss outside [0, B]");
  }

  RiskTransferResult res;
  for (std::size_t th = 0; th < e1.parameters(); ++th) {
    // Expected loss of rule2 at each e2 outcome.
    std::vector<double> g(e2.outcomes(), 0.0);
    for (std::size_t z = 0; z < g.size(); ++z)
      for (std::size_t a = 0; a < actions; ++a) g[z] += rule2[z][a] * loss[th][a];
    const auto simulated = push_discrete(e1.rows[th], kernel);
    double risk1 = 0.0;
    for (std::size_t x = 0; x < e1.outcomes(); ++x) {
      double composite = 0.0;
      for (std::size_t z = 0; z < g.size(); ++z) composite += kernel[x][z] * g[z];
      risk1 += e1.rows[th][x] * composite;
    }
    double risk2 = 0.0, tv = 0.0;
    for (std::size_t z = 0; z < g.size(); ++z) {
      risk2 += e2.rows[th][z] * g[z];
      tv += std::abs(simulated[z] - e2.rows[th][z]);
    }
    res.lhs = std::max(res.lhs, risk1);
    res.rhs = std::max(res.rhs, risk2);
    res.epsilon = std::max(res.epsilon, 0.5 * tv);
  }
  res.holds = res.lhs <= res.rhs + bound * res.epsilon + 1e-12;
  return res;
}

}  // namespace lecam
