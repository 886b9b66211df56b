#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lecam/deficiency.hpp"
#include "lecam/divergences.hpp"
#include "lecam/rng.hpp"
#include "lecam/sample_set.hpp"

namespace lecam::control {

enum class Domain { Source, Target };

inline const char* domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

struct ControlConfig {
  std::size_t dim = 1;
  std::size_t horizon = 50;
  /// Evaluation episodes per domain.
  std::size_t episodes = 200;
  /// Episodes averaged (with common random numbers) when scoring a gain during training.
  std::size_t train_episodes = 200;
  double s0_scale = 5.0;
  std::vector<double> sigma_proc{0.1};
  std::vector<double> sigma_obs_source{0.0};
  std::vector<double> sigma_obs_target{1.0};
  double action_penalty = 0.01;
  std::uint64_t seed = 42;

  double mmd_weight = 1e8;
  /// Observations per domain fed to the invariance penalty.
  std::size_t mmd_pool = 2000;
  /// Probe / estimate / retrain cycles for the Le Cam policy.
  std::size_t lecam_rounds = 2;
  OptimizerConfig estimator{};

  static ControlConfig one_d() { return ControlConfig{}; }

  static ControlConfig two_d() {
    ControlConfig c;
    c.dim = 2;
    c.sigma_proc = {0.1, 0.1};
    c.sigma_obs_source = {0.0, 0.0};
    c.sigma_obs_target = {0.1, 2.0};
    return c;
  }

  void validate() const {
    if (dim == 0) throw std::invalid_argument("ControlConfig: dim must be positive");
    if (horizon == 0 || episodes == 0 || train_episodes == 0)
      throw std::invalid_argument("ControlConfig: horizon and episode counts must be >= 1");
    for (const auto* v : {&sigma_proc, &sigma_obs_source, &sigma_obs_target}) {
      if (v->size() != dim) throw std::invalid_argument("ControlConfig: noise vectors must have one entry per dim");
      for (double s : *v)
        if (!(s >= 0.0)) throw std::invalid_argument("ControlConfig: noise scales must be >= 0");
    }
    if (!(s0_scale >= 0.0) || !(action_penalty >= 0.0) || !(mmd_weight >= 0.0))
      throw std::invalid_argument("ControlConfig: s0_scale, action_penalty and mmd_weight must be >= 0");
    if (mmd_pool < 2) throw std::invalid_argument("ControlConfig: mmd_pool must be >= 2");
  }
};

/// a = w * (c * o), elementwise.
struct LinearPolicy {
  std::vector<double> w;
  std::vector<double> c;

  static LinearPolicy uniform(std::size_t dim, double gain) { return {std::vector<double>(dim, gain), std::vector<double>(dim, 1.0)}; }

  std::size_t dim() const { return w.size(); }
  double effective_gain(std::size_t k) const { return w[k] * c[k]; }

  void validate(std::size_t expected_dim) const {
    if (w.size() != expected_dim || c.size() != expected_dim)
      throw std::invalid_argument("LinearPolicy: dimension does not match the environment");
    for (std::size_t k = 0; k < w.size(); ++k)
      if (!std::isfinite(w[k]) || !std::isfinite(c[k])) throw std::invalid_argument("LinearPolicy: non-finite entry");
  }
};

struct EpisodeResult {
  double episode_return = 0.0;
  std::vector<std::vector<double>> trajectory;  // horizon + 1 states
  std::vector<std::vector<double>> observations;  // o_0 .. o_horizon
  std::string label;
};

namespace detail {

/// Rollout with an explicit observation-noise vector.
inline EpisodeResult rollout_with_noise(const ControlConfig& cfg, const LinearPolicy& pol,
                                        const std::vector<double>& sigma_obs, RngStream& rng) {
  const std::size_t d = cfg.dim;
  EpisodeResult ep;
  ep.trajectory.reserve(cfg.horizon + 1);
  ep.observations.reserve(cfg.horizon + 1);
  std::vector<double> s(d), o(d), a(d);
  for (std::size_t k = 0; k < d; ++k) s[k] = cfg.s0_scale * rng.normal();
  ep.trajectory.push_back(s);
  double cost = 0.0;
  for (std::size_t t = 0; t <= cfg.horizon; ++t) {
    for (std::size_t k = 0; k < d; ++k) o[k] = s[k] + sigma_obs[k] * rng.normal();
    ep.observations.push_back(o);
    if (t == cfg.horizon) break;
    for (std::size_t k = 0; k < d; ++k) {
      a[k] = pol.w[k] * (pol.c[k] * o[k]);
      s[k] += a[k] + cfg.sigma_proc[k] * rng.normal();
      cost += s[k] * s[k] + cfg.action_penalty * a[k] * a[k];
    }
    ep.trajectory.push_back(s);
  }
  ep.episode_return = -cost;
  return ep;
}

constexpr std::uint64_t kTrainStream = 0x747261696e;
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kProbeStream = 0x70726f6265;

/// Pre-drawn noise for the training episodes, so that every candidate gain is
/// scored against the same draws.
struct NoiseBank {
  std::size_t episodes = 0;
  std::vector<double> s0;    // episodes x dim
  std::vector<double> noise;  // episodes x horizon x (obs[dim], proc[dim])
};

inline NoiseBank make_noise_bank(const ControlConfig& cfg, std::uint64_t salt) {
  const RngStream base(cfg.seed, kTrainStream + salt);
  NoiseBank bank;
  bank.episodes = cfg.train_episodes;
  bank.s0.reserve(cfg.train_episodes * cfg.dim);
  bank.noise.reserve(cfg.train_episodes * cfg.horizon * 2 * cfg.dim);
  for (std::size_t e = 0; e < cfg.train_episodes; ++e) {
    RngStream rng = base.derive(e);
    for (std::size_t k = 0; k < cfg.dim; ++k) bank.s0.push_back(rng.normal());
    for (std::size_t i = 0; i < cfg.horizon * 2 * cfg.dim; ++i) bank.noise.push_back(rng.normal());
  }
  return bank;
}

/// Mean return over the banked episodes.
inline double training_return(const ControlConfig& cfg, const LinearPolicy& pol, const std::vector<double>& sigma_obs,
                              const NoiseBank& bank) {
  const std::size_t d = cfg.dim;
  std::vector<double> s(d);
  const double* z = bank.noise.data();
  double cost = 0.0;
  for (std::size_t e = 0; e < bank.episodes; ++e) {
    for (std::size_t k = 0; k < d; ++k) s[k] = cfg.s0_scale * bank.s0[e * d + k];
    for (std::size_t t = 0; t < cfg.horizon; ++t, z += 2 * d) {
      for (std::size_t k = 0; k < d; ++k) {
        const double a = pol.w[k] * (pol.c[k] * (s[k] + sigma_obs[k] * z[k]));
        s[k] += a + cfg.sigma_proc[k] * z[d + k];
        cost += s[k] * s[k] + cfg.action_penalty * a * a;
      }
    }
  }
  return -cost / static_cast<double>(bank.episodes);
}

}  // namespace detail

/// Candidate gains -1.5, -1.49, ..., 0.5.
inline std::vector<double> gain_grid() {
  std::vector<double> g;
  for (int i = -150; i <= 50; ++i) g.push_back(i / 100.0);
  return g;
}

/// One episode. Observations are o_t = s_t + eta_t with the domain's noise scale.
inline EpisodeResult rollout(const ControlConfig& cfg, const LinearPolicy& pol, Domain domain, RngStream& rng) {
  cfg.validate();
  pol.validate(cfg.dim);
  return detail::rollout_with_noise(cfg, pol, domain == Domain::Source ? cfg.sigma_obs_source : cfg.sigma_obs_target, rng);
}

/// Coordinate-wise grid search over w with c fixed, maximizing the mean
/// training return under the given observation noise. The cost separates by
/// dimension, so two sweeps reach the joint grid optimum.
inline LinearPolicy grid_search_gain(const ControlConfig& cfg, const std::vector<double>& sigma_obs,
                                     std::vector<double> c, const detail::NoiseBank& bank) {
  LinearPolicy pol{std::vector<double>(cfg.dim, -1.0), std::move(c)};
  const auto grid = gain_grid();
  for (int sweep = 0; sweep < (cfg.dim > 1 ? 2 : 1); ++sweep) {
    for (std::size_t k = 0; k < cfg.dim; ++k) {
      double best = -std::numeric_limits<double>::infinity(), best_w = pol.w[k];
      for (double w : grid) {
        pol.w[k] = w;
        const double r = detail::training_return(cfg, pol, sigma_obs, bank);
        if (r > best) {
          best = r;
          best_w = w;
        }
      }
      pol.w[k] = best_w;
    }
  }
  return pol;
}

/// Best gain on clean source observations.
inline LinearPolicy train_naive(const ControlConfig& cfg) {
  cfg.validate();
  return grid_search_gain(cfg, cfg.sigma_obs_source, std::vector<double>(cfg.dim, 1.0), detail::make_noise_bank(cfg, 0));
}

/// Observations logged while `probe` runs in one domain, pooled over episodes.
inline SampleSet collect_observations(const ControlConfig& cfg, const LinearPolicy& probe, Domain domain,
                                      std::size_t episodes, std::uint64_t salt) {
  SampleSet out(cfg.dim);
  out.reserve(episodes * (cfg.horizon + 1));
  const RngStream base(cfg.seed, detail::kProbeStream + 2 * salt + (domain == Domain::Target ? 1 : 0));
  for (std::size_t e = 0; e < episodes; ++e) {
    RngStream rng = base.derive(e);
    const auto ep = rollout(cfg, probe, domain, rng);
    for (const auto& o : ep.observations) out.push_back(o);
  }
  return out;
}

struct InvariantResult {
  LinearPolicy policy;
  double objective = 0.0;
  double mmd2 = 0.0;
};

/// Jointly picks encoder scales c in [0, 1] and gains w to minimize
///   source cost(w * c) + mmd_weight * MMD^2(c * o_source, c * o_target)
/// where the observation pools are logged under the naive policy and the MMD
/// bandwidth is frozen from the unscaled pools. Each c_k is searched on a
/// 0.05 grid and then refined to 0.01; for every candidate c the gains come
/// from the usual grid search.
inline InvariantResult train_invariant(const ControlConfig& cfg, double mmd_weight) {
  cfg.validate();
  if (!(mmd_weight >= 0.0)) throw std::invalid_argument("train_invariant: mmd_weight must be >= 0");
  const LinearPolicy probe = train_naive(cfg);
  const std::size_t probe_episodes = cfg.mmd_pool / (cfg.horizon + 1) + 1;
  SampleSet src = collect_observations(cfg, probe, Domain::Source, probe_episodes, 100);
  SampleSet tgt = collect_observations(cfg, probe, Domain::Target, probe_episodes, 101);
  RngStream pick(cfg.seed, 0x706f6f6c);
  src = src.subset(lecam::detail::sample_without_replacement(src.size(), cfg.mmd_pool, pick));
  tgt = tgt.subset(lecam::detail::sample_without_replacement(tgt.size(), cfg.mmd_pool, pick));
  const Bandwidth bw = median_heuristic(src, tgt, cfg.seed);

  auto scaled_mmd2 = [&](const std::vector<double>& c) {
    std::vector<double> inv(c);
    return mmd2_unbiased(lecam::detail::scale_columns(src, inv), lecam::detail::scale_columns(tgt, inv), bw);
  };

  const auto bank = detail::make_noise_bank(cfg, 0);
  InvariantResult best;
  best.objective = std::numeric_limits<double>::infinity();
  auto evaluate = [&](std::vector<double> c) {
    const LinearPolicy pol = grid_search_gain(cfg, cfg.sigma_obs_source, c, bank);
    const double m = scaled_mmd2(c);
    const double obj = -detail::training_return(cfg, pol, cfg.sigma_obs_source, bank) + mmd_weight * m;
    if (obj < best.objective) best = {pol, obj, m};
    return obj;
  };

  std::vector<double> c(cfg.dim, 1.0);
  evaluate(c);
  for (int sweep = 0; sweep < (cfg.dim > 1 ? 2 : 1); ++sweep) {
    for (std::size_t k = 0; k < cfg.dim; ++k) {
      c = best.policy.c;
      auto search = [&](int lo, int hi, int step) {
        double best_obj = std::numeric_limits<double>::infinity();
        int best_i = lo;
        for (int i = std::max(lo, 0); i <= std::min(hi, 100); i += step) {
          c[k] = i / 100.0;
          const double obj = evaluate(c);
          if (obj < best_obj) {
            best_obj = obj;
            best_i = i;
          }
        }
        return best_i;
      };
      const int coarse = search(0, 100, 5);
      search(coarse - 4, coarse + 4, 1);
    }
  }
  return best;
}

struct LeCamResult {
  LinearPolicy policy;
  std::vector<double> sigma_hat;
  DeficiencyEstimate estimate;
};

/// Fits an additive-noise simulator from clean to noisy observations, then
/// retrains the gain on the source plant with simulated observation noise.
/// Observations are logged in closed loop; the first round probes with the
/// naive policy and each later round probes with the previous Le Cam policy,
/// since aggressive probing inflates target state variance.
inline LeCamResult train_lecam(const ControlConfig& cfg) {
  cfg.validate();
  LeCamResult res;
  res.policy = train_naive(cfg);
  const std::size_t rounds = std::max<std::size_t>(cfg.lecam_rounds, 1);
  for (std::size_t round = 0; round < rounds; ++round) {
    const SampleSet src = collect_observations(cfg, res.policy, Domain::Source, cfg.train_episodes, 2 * round);
    const SampleSet tgt = collect_observations(cfg, res.policy, Domain::Target, cfg.train_episodes, 2 * round + 1);
    OptimizerConfig opt = cfg.estimator;
    opt.seed = RngStream(cfg.seed, 0x736967 + round).engine()();
    opt.per_dim_scaling = true;
    res.estimate = estimate_deficiency(src, tgt, KernelSpec{KernelFamily::AdditiveGaussian, {}}, opt);
    res.sigma_hat = res.estimate.psi_star();
    std::vector<double> simulated(cfg.dim);
    for (std::size_t k = 0; k < cfg.dim; ++k)
      simulated[k] = std::sqrt(cfg.sigma_obs_source[k] * cfg.sigma_obs_source[k] + res.sigma_hat[k] * res.sigma_hat[k]);
    res.policy = grid_search_gain(cfg, simulated, std::vector<double>(cfg.dim, 1.0), detail::make_noise_bank(cfg, 0));
  }
  return res;
}

struct SuiteRow {
  std::string policy;
  Domain domain = Domain::Source;
  double mean_return = 0.0;
  double se = 0.0;
  std::vector<double> gain;                     // effective gain w * c
  std::optional<std::vector<double>> sigma_hat;  // Le Cam only
};

struct SuiteResult {
  LinearPolicy naive, invariant, lecam;
  std::vector<double> sigma_hat;
  std::vector<SuiteRow> rows;

  const SuiteRow& row(const std::string& policy, Domain d) const {
    for (const auto& r : rows)
      if (r.policy == policy && r.domain == d) return r;
    throw std::out_of_range("SuiteResult: no row for " + policy);
  }
};

struct ReturnStats {
  double mean = 0.0;
  double se = 0.0;
};

inline ReturnStats evaluate_policy(const ControlConfig& cfg, const LinearPolicy& pol, Domain domain) {
  const RngStream base(cfg.seed, detail::kEvalStream + (domain == Domain::Target ? 1 : 0));
  std::vector<double> r(cfg.episodes);
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    RngStream rng = base.derive(e);
    r[e] = rollout(cfg, pol, domain, rng).episode_return;
  }
  ReturnStats s;
  s.mean = lecam::detail::mean_of(r);
  s.se = r.size() > 1 ? std::sqrt(lecam::detail::variance_of(r) / static_cast<double>(r.size())) : 0.0;
  return s;
}

/// Trains Naive, Invariant and Le Cam policies and evaluates each in both domains.
inline SuiteResult evaluate_suite(const ControlConfig& cfg) {
  cfg.validate();
  SuiteResult out;
  out.naive = train_naive(cfg);
  out.invariant = train_invariant(cfg, cfg.mmd_weight).policy;
  const LeCamResult lc = train_lecam(cfg);
  out.lecam = lc.policy;
  out.sigma_hat = lc.sigma_hat;
  const std::vector<std::pair<std::string, const LinearPolicy*>> policies = {
      {"naive", &out.naive}, {"invariant", &out.invariant}, {"lecam", &out.lecam}};
  for (const auto& [name, pol] : policies) {
    for (Domain d : {Domain::Source, Domain::Target}) {
      const ReturnStats s = evaluate_policy(cfg, *pol, d);
      SuiteRow row{name, d, s.mean, s.se, {}, std::nullopt};
      for (std::size_t k = 0; k < cfg.dim; ++k) row.gain.push_back(pol->effective_gain(k));
      if (name == "lecam") row.sigma_hat = lc.sigma_hat;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

inline void write_csv(std::ostream& os, const SuiteResult& res) {
  auto cell = [&](const std::vector<double>& v, std::size_t k) {
    if (k < v.size()) os << lecam::detail::format_double(v[k]);
  };
  os << "policy,domain,mean_return,se,gain_x,gain_y,sigma_hat_x,sigma_hat_y\n";
  for (const auto& r : res.rows) {
    os << r.policy << ',' << domain_name(r.domain) << ',' << lecam::detail::format_double(r.mean_return) << ','
       << lecam::detail::format_double(r.se) << ',';
    cell(r.gain, 0);
    os << ',';
    cell(r.gain, 1);
    os << ',';
    if (r.sigma_hat) cell(*r.sigma_hat, 0);
    os << ',';
    if (r.sigma_hat) cell(*r.sigma_hat, 1);
    os << '\n';
  }
}

inline nlohmann::json to_json(const LinearPolicy& p) { return {{"w", p.w}, {"c", p.c}}; }

inline nlohmann::json to_json(const SuiteResult& res) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : res.rows) {
    nlohmann::json j = {{"policy", r.policy}, {"domain", domain_name(r.domain)}, {"mean_return", r.mean_return},
                        {"se", r.se}, {"gain", r.gain}};
    if (r.sigma_hat) j["sigma_hat"] = *r.sigma_hat;
    rows.push_back(j);
  }
  return {{"policies", {{"naive", to_json(res.naive)}, {"invariant", to_json(res.invariant)}, {"lecam", to_json(res.lecam)}}},
          {"sigma_hat", res.sigma_hat},
          {"rows", rows}};
}

}  // namespace lecam::control
