#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lecam/deficiency.hpp"
#include "lecam/divergences.hpp"
#include "lecam/markov_kernels.hpp"
#include "lecam/regression.hpp"
#include "lecam/rng.hpp"
#include "lecam/sample_set.hpp"

namespace lecam::verification {

struct CheckReport {
  std::string name;
  std::string metric;
  std::vector<std::pair<std::string, double>> measured;
  bool passed = false;
  std::string threshold;
  std::string result;  // short headline value

  double at(const std::string& key) const {
    for (const auto& [k, v] : measured)
      if (k == key) return v;
    throw std::out_of_range("CheckReport: no measurement '" + key + "'");
  }
};

inline nlohmann::json to_json(const CheckReport& r) {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : r.measured) m[k] = v;
  return {{"name", r.name}, {"metric", r.metric}, {"result", r.result},
          {"passed", r.passed}, {"threshold", r.threshold}, {"measured", m}};
}

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline SampleSet normal_1d(std::size_t n, double mean, double sd, RngStream& rng) {
  SampleSet s(n, 1);
  for (double& v : s.data()) v = mean + sd * rng.normal();
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// A1: sufficient statistic has zero deficiency.

struct A1Config {
  std::size_t n_obs = 10;
  std::size_t n_reps = 2000;
  double threshold = 0.1;
};

inline CheckReport check_a1_sufficiency(std::uint64_t seed, const A1Config& cfg = {}) {
  CheckReport r{"A1: Sufficiency", "MMD (delta -> 0)", {}, false, "mmd2 < " + detail::fixed(cfg.threshold, 2), {}};
  const double good = sufficiency_check(cfg.n_obs, cfg.n_reps, seed);
  const double wrong = sufficiency_check(cfg.n_obs, cfg.n_reps, seed, true);
  r.measured = {{"mmd2", good}, {"mmd2_wrong_kernel", wrong}};
  r.passed = good < cfg.threshold;
  r.result = detail::fixed(good) + (r.passed ? " ~ 0" : "");
  return r;
}

// ---------------------------------------------------------------------------
// A2: deficiency grows with quantization width.

struct A2Config {
  std::vector<double> deltas{0.1, 0.5, 1.0, 2.0, 3.0, 5.0};
  std::size_t n = 4500;
  /// Source spread; the grid covers bins from a fraction of it to many times it.
  double source_sd = 0.04;
  /// Bandwidth as a multiple of the unquantized pool's median distance, fixed across the grid.
  double bandwidth_multiple = 3.0;
};

/// For each bin width, the reverse deficiency of quantized samples with respect
/// to fresh unquantized samples, using an additive-noise simulator. Every
/// grid point shares the same raw draws, split and bandwidth.
inline CheckReport check_a2_quantization(std::uint64_t seed, const A2Config& cfg = {}) {
  CheckReport r{"A2: Quantization", "Monotonicity", {}, false, "Spearman(delta, deficiency) = 1", {}};
  RngStream rng(seed, 0xa2);
  const SampleSet raw = detail::normal_1d(cfg.n, 0.0, cfg.source_sd, rng);
  const SampleSet original = detail::normal_1d(cfg.n, 0.0, cfg.source_sd, rng);
  OptimizerConfig opt;
  opt.seed = seed;
  opt.eval_size = cfg.n / 3;
  opt.init = InitMode::Zeros;
  opt.bandwidth = cfg.bandwidth_multiple * median_heuristic(raw, original, seed).value();
  std::vector<double> deficiency;
  for (double delta : cfg.deltas) {
    RngStream unused(seed);
    const SampleSet q = apply_kernel(KernelSpec::quantization(delta), raw, unused);
    const auto est = estimate_deficiency(q, original, KernelSpec::additive_gaussian({0.0}), opt);
    deficiency.push_back(est.divergence_final);
    r.measured.emplace_back("deficiency@" + lecam::detail::format_double(delta), est.divergence_final);
  }
  if (cfg.deltas.size() < 2) {
    r.passed = true;
    r.result = "Degenerate (single point)";
    return r;
  }
  const double rho = spearman_rank_correlation(cfg.deltas, deficiency);
  r.measured.emplace_back("spearman", rho);
  r.passed = rho >= 1.0 - 1e-12;
  r.result = r.passed ? "Strictly Increasing" : "Not monotone (rho " + detail::fixed(rho, 3) + ")";
  return r;
}

// ---------------------------------------------------------------------------
// A3 and B1: linear regression under a one-dimensional observation shift.

struct RegressionTask {
  SampleSet source, target, source_test, target_test;
  std::vector<double> y_source, y_target, y_source_test, y_target_test;
};

struct RegressionTaskConfig {
  std::size_t dim = 20;
  std::size_t n = 5000;
  std::size_t noisy_dim = 0;
  /// Index of the clean feature correlated with the noisy one.
  std::size_t partner_dim = 1;
  double partner_corr = 0.95;
  double beta_noisy = 0.66;
  double beta_other = 0.2;
  double label_noise = 1.0;
  double source_noise = 0.01;
  double target_noise = 5.0;
};

/// Latent features are standard normal except that the noisy coordinate is
/// correlated with its partner. Labels are linear in the latent features;
/// only the noisy coordinate is observed with extra noise, more so in the target.
inline RegressionTask make_regression_task(const RegressionTaskConfig& cfg, std::uint64_t seed) {
  RngStream rng(seed, 0x72656772);
  RegressionTask t{SampleSet(cfg.dim), SampleSet(cfg.dim), SampleSet(cfg.dim), SampleSet(cfg.dim), {}, {}, {}, {}};
  std::vector<double> z(cfg.dim);
  auto fill = [&](SampleSet& x, std::vector<double>& y, double obs_noise) {
    x.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
      for (double& v : z) v = rng.normal();
      const std::size_t a = cfg.noisy_dim;
      z[a] = cfg.partner_corr * z[cfg.partner_dim] + std::sqrt(1.0 - cfg.partner_corr * cfg.partner_corr) * z[a];
      double label = cfg.label_noise * rng.normal();
      for (std::size_t k = 0; k < cfg.dim; ++k) label += (k == a ? cfg.beta_noisy : cfg.beta_other) * z[k];
      z[a] += obs_noise * rng.normal();
      x.push_back(z);
      y.push_back(label);
    }
  };
  fill(t.source, t.y_source, cfg.source_noise);
  fill(t.target, t.y_target, cfg.target_noise);
  fill(t.source_test, t.y_source_test, cfg.source_noise);
  fill(t.target_test, t.y_target_test, cfg.target_noise);
  return t;
}

namespace detail {

inline double proxy_between(const SampleSet& a, const SampleSet& b, std::uint64_t seed, std::size_t n = 1000) {
  const SampleSet sa = a.slice(0, std::min(n, a.size())), sb = b.slice(0, std::min(n, b.size()));
  return proxy_distance(mmd2_unbiased(sa, sb, median_heuristic(sa, sb, seed)));
}

}  // namespace detail

struct A3Config {
  RegressionTaskConfig task{};
  double ridge_alpha = 0.1;
  std::vector<double> invariant_weights{0.1, 1.0, 10.0};
  double reported_weight = 1.0;
  std::size_t simulated_copies = 3;
};

inline CheckReport check_a3_gaussian_regression(std::uint64_t seed, const A3Config& cfg = {}) {
  using namespace regression;
  CheckReport r{"A3: Gaussian Shift", "Noisy MSE / Clean MSE / Learned Noise", {}, false,
                "noisy(LeCam) < noisy(ERM), clean(LeCam) <= clean(Invariant) + 0.1, sigma_hat > 0.5", {}};
  const RegressionTask t = make_regression_task(cfg.task, seed);
  const std::size_t a = cfg.task.noisy_dim;

  const LinearModel erm = fit_ridge(t.source, t.y_source, cfg.ridge_alpha);
  const double erm_clean = mse(erm, t.source_test, t.y_source_test);
  const double erm_noisy = mse(erm, t.target_test, t.y_target_test);

  OptimizerConfig opt;
  opt.seed = seed;
  const auto est = estimate_deficiency(t.source, t.target, KernelSpec{KernelFamily::AdditiveGaussian, {}}, opt);
  const LinearModel lc = fit_on_simulated(t.source, t.y_source, est.psi_star(), cfg.ridge_alpha, cfg.simulated_copies, seed);
  const double lc_clean = mse(lc, t.source_test, t.y_source_test);
  const double lc_noisy = mse(lc, t.target_test, t.y_target_test);
  RngStream sim_rng(seed, 0x726576);
  const SampleSet simulated = apply_kernel(KernelSpec{KernelFamily::AdditiveGaussian, est.psi_star()}, t.source, sim_rng);

  double inv_clean = 0.0, inv_noisy = 0.0, inv_scale = 0.0, inv_rev = 0.0;
  double best_weight = 0.0, best_noisy = std::numeric_limits<double>::infinity();
  for (double w : cfg.invariant_weights) {
    InvariantConfig ic;
    ic.mmd_weight = w;
    ic.ridge_alpha = cfg.ridge_alpha;
    ic.seed = seed;
    const EncodedModel m = fit_invariant_encoder(t.source, t.y_source, t.target, ic);
    const double clean = m.mse(t.source_test, t.y_source_test), noisy = m.mse(t.target_test, t.y_target_test);
    if (noisy < best_noisy) {
      best_noisy = noisy;
      best_weight = w;
    }
    if (w == cfg.reported_weight) {
      inv_clean = clean;
      inv_noisy = noisy;
      inv_scale = m.scale[a];
      inv_rev = detail::proxy_between(lecam::detail::scale_columns(t.source, m.scale),
                                      lecam::detail::scale_columns(t.target, m.scale), seed);
    }
  }

  r.measured = {{"erm_clean_mse", erm_clean},
                {"erm_noisy_mse", erm_noisy},
                {"erm_rev_mmd", detail::proxy_between(t.source, t.target, seed)},
                {"invariant_clean_mse", inv_clean},
                {"invariant_noisy_mse", inv_noisy},
                {"invariant_rev_mmd", inv_rev},
                {"invariant_scale_noisy_dim", inv_scale},
                {"invariant_best_weight", best_weight},
                {"invariant_best_noisy_mse", best_noisy},
                {"lecam_clean_mse", lc_clean},
                {"lecam_noisy_mse", lc_noisy},
                {"lecam_rev_mmd", detail::proxy_between(simulated, t.target, seed)},
                {"lecam_sigma_hat", est.psi_star()[a]}};
  r.passed = lc_noisy < erm_noisy && lc_clean <= inv_clean + 0.1 && est.psi_star()[a] > 0.5;
  r.result = "sigma_hat " + detail::fixed(est.psi_star()[a], 2) + ", noisy MSE " + detail::fixed(lc_noisy, 2) +
             " vs ERM " + detail::fixed(erm_noisy, 2);
  return r;
}

struct B1Config {
  RegressionTaskConfig task = [] {
    RegressionTaskConfig t;
    t.dim = 2;
    t.noisy_dim = 1;
    t.partner_dim = 0;
    t.partner_corr = 0.0;
    t.beta_noisy = 0.66;
    t.beta_other = 0.5;
    t.target_noise = 2.0;
    return t;
  }();
  double mmd_weight = 200.0;
  double ridge_alpha = 0.1;
  double collapse_ratio = 0.2;
  double recovery_fraction = 0.5;
};

inline CheckReport check_b1_invariance_trap(std::uint64_t seed, const B1Config& cfg = {}) {
  using namespace regression;
  CheckReport r{"B1: Invariance Trap", "Source Preservation", {}, false,
                "|c_noisy| < 0.2 |c_clean| and sigma_hat_noisy >= 0.5 sigma_true", {}};
  const RegressionTask t = make_regression_task(cfg.task, seed);
  const std::size_t a = cfg.task.noisy_dim, b = cfg.task.partner_dim;
  InvariantConfig ic;
  ic.mmd_weight = cfg.mmd_weight;
  ic.ridge_alpha = cfg.ridge_alpha;
  ic.seed = seed;
  const EncodedModel inv = fit_invariant_encoder(t.source, t.y_source, t.target, ic);
  OptimizerConfig opt;
  opt.seed = seed;
  const auto est = estimate_deficiency(t.source, t.target, KernelSpec{KernelFamily::AdditiveGaussian, {}}, opt);
  const double sigma_true = std::sqrt(cfg.task.target_noise * cfg.task.target_noise - cfg.task.source_noise * cfg.task.source_noise);
  const LinearModel erm = fit_ridge(t.source, t.y_source, cfg.ridge_alpha);
  r.measured = {{"invariant_scale_clean", inv.scale[b]},
                {"invariant_scale_noisy", inv.scale[a]},
                {"invariant_clean_mse", inv.mse(t.source_test, t.y_source_test)},
                {"erm_clean_mse", mse(erm, t.source_test, t.y_source_test)},
                {"lecam_scale_clean", 1.0},
                {"lecam_scale_noisy", 1.0},
                {"lecam_sigma_hat_noisy", est.psi_star()[a]},
                {"sigma_true", sigma_true}};
  const bool collapsed = std::abs(inv.scale[a]) < cfg.collapse_ratio * std::abs(inv.scale[b]);
  const bool recovered = est.psi_star()[a] >= cfg.recovery_fraction * sigma_true;
  r.passed = collapsed && recovered;
  r.result = collapsed ? "Collapse (c_noisy " + detail::fixed(inv.scale[a], 3) + ")" : "No collapse";
  return r;
}

// ---------------------------------------------------------------------------
// D1: equal moments, different shapes.

struct D1Config {
  double mu = 2.0;
  double sigma = 0.7;
  std::size_t n = 2000;
  double wide_multiple = 10.0;
  double tv_min = 0.3;
  double mmd_cutoff = 0.01;
};

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// TV between 0.5 N(-mu, s^2) + 0.5 N(mu, s^2) and N(0, mu^2 + s^2) on [-12S, 12S].
inline double d1_total_variation(double mu, double sigma) {
  const double s = std::sqrt(mu * mu + sigma * sigma);
  auto p = [&](double x) { return 0.5 * normal_pdf(x, -mu, sigma) + 0.5 * normal_pdf(x, mu, sigma); };
  auto q = [&](double x) { return normal_pdf(x, 0.0, s); };
  return tv_continuous_1d(p, q, -12.0 * s, 12.0 * s, 20001);
}

inline CheckReport check_d1_proxy_blindness(std::uint64_t seed, const D1Config& cfg = {}) {
  CheckReport r{"D1: Proxy Blindness", "Detection Sensitivity", {}, false,
                "TV > 0.3, mmd2(10x median bw) < 0.01, mmd2(median bw) > 0.01", {}};
  RngStream rng(seed, 0xd1);
  const double s = std::sqrt(cfg.mu * cfg.mu + cfg.sigma * cfg.sigma);
  SampleSet p(cfg.n, 1), q(cfg.n, 1);
  for (double& v : p.data()) v = (rng.uniform() < 0.5 ? -cfg.mu : cfg.mu) + cfg.sigma * rng.normal();
  for (double& v : q.data()) v = s * rng.normal();
  const double tv = d1_total_variation(cfg.mu, cfg.sigma);
  const double h = median_heuristic(p, q, seed).value();
  const double narrow = mmd2_unbiased(p, q, Bandwidth(h));
  const double wide = mmd2_unbiased(p, q, Bandwidth(cfg.wide_multiple * h));
  r.measured = {{"tv", tv}, {"mmd2_median_bw", narrow}, {"mmd2_wide_bw", wide}, {"median_bw", h}};
  r.passed = tv > cfg.tv_min && wide < cfg.mmd_cutoff && narrow > cfg.mmd_cutoff;
  r.result = "TV " + detail::fixed(tv, 3) + ", wide MMD2 " + detail::fixed(wide, 5);
  return r;
}

// ---------------------------------------------------------------------------

inline std::vector<CheckReport> run_all(std::uint64_t seed) {
  return {check_a1_sufficiency(seed), check_a2_quantization(seed), check_a3_gaussian_regression(seed),
          check_b1_invariance_trap(seed), check_d1_proxy_blindness(seed)};
}

/// Test | Metric | Result | Hypothesis, one row per check.
inline void print_table(std::ostream& os, const std::vector<CheckReport>& reports) {
  std::size_t w0 = 4, w1 = 6, w2 = 6;
  for (const auto& r : reports) {
    w0 = std::max(w0, r.name.size());
    w1 = std::max(w1, r.metric.size());
    w2 = std::max(w2, r.result.size());
  }
  auto row = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
    os << a << std::string(w0 - a.size() + 2, ' ') << b << std::string(w1 - b.size() + 2, ' ') << c
       << std::string(w2 - c.size() + 2, ' ') << d << '\n';
  };
  row("Test", "Metric", "Result", "Hypothesis");
  os << std::string(w0 + w1 + w2 + 16, '-') << '\n';
  for (const auto& r : reports) row(r.name, r.metric, r.result, r.passed ? "Confirmed" : "Rejected");
}

}  // namespace lecam::verification
