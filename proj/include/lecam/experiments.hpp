#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lecam/config.hpp"
#include "lecam/control.hpp"
#include "lecam/deficiency.hpp"
#include "lecam/hla.hpp"
#include "lecam/verification.hpp"

namespace lecam {

// ---------------------------------------------------------------------------
// Gaussian shift: clean source, target with extra noise on dim 0.

struct GaussianShiftConfig {
  std::size_t dim = 20;
  std::size_t n = 5000;
  double target_noise = 5.0;  // total sd of dim 0 in the target
  std::uint64_t seed = 42;
  OptimizerConfig optimizer{};
};

struct GaussianShiftResult {
  DirectionalGap gap;
  double sigma0_true = 0.0;
};

/// x_k = theta_k + e_k with theta_k ~ U[-1, 1]; the target draws e_0 with sd `target_noise`.
inline std::pair<SampleSet, SampleSet> make_gaussian_shift(const GaussianShiftConfig& cfg) {
  if (cfg.dim == 0 || cfg.n < 2) throw std::invalid_argument("gaussian shift: need dim >= 1 and n >= 2");
  if (!(cfg.target_noise >= 1.0)) throw std::invalid_argument("gaussian shift: target_noise must be >= 1");
  RngStream rng(cfg.seed, 5);
  SampleSet s(cfg.dim), t(cfg.dim);
  s.reserve(cfg.n);
  t.reserve(cfg.n);
  std::vector<double> p(cfg.dim);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    for (std::size_t k = 0; k < cfg.dim; ++k) p[k] = rng.uniform(-1.0, 1.0) + rng.normal();
    s.push_back(p);
  }
  for (std::size_t i = 0; i < cfg.n; ++i) {
    for (std::size_t k = 0; k < cfg.dim; ++k) p[k] = rng.uniform(-1.0, 1.0) + (k == 0 ? cfg.target_noise : 1.0) * rng.normal();
    t.push_back(p);
  }
  return {std::move(s), std::move(t)};
}

inline GaussianShiftResult run_gaussian_shift(const GaussianShiftConfig& cfg) {
  const auto [s, t] = make_gaussian_shift(cfg);
  OptimizerConfig opt = cfg.optimizer;
  opt.seed = cfg.seed;
  GaussianShiftResult r{directional_gap(s, t, KernelSpec{KernelFamily::AdditiveGaussian, {}}, opt),
                        std::sqrt(cfg.target_noise * cfg.target_noise - 1.0)};
  return r;
}

inline nlohmann::json to_json(const GaussianShiftResult& r) {
  return {{"forward", to_json(r.gap.forward)},
          {"reverse", to_json(r.gap.reverse)},
          {"sigma0_hat", r.gap.forward.psi_star().at(0)},
          {"sigma0_true", r.sigma0_true}};
}

inline void write_csv(std::ostream& os, const GaussianShiftResult& r) {
  os << "direction,divergence_final,converged,bandwidth";
  for (std::size_t k = 0; k < r.gap.forward.psi_star().size(); ++k) os << ",sigma_" << k;
  os << '\n';
  for (const auto& [name, e] : {std::pair{"forward", &r.gap.forward}, std::pair{"reverse", &r.gap.reverse}}) {
    os << name << ',' << detail::format_double(e->divergence_final) << ',' << (e->converged ? 1 : 0) << ','
       << detail::format_double(e->bandwidth);
    for (double v : e->psi_star()) os << ',' << detail::format_double(v);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Random discrete instances for the risk-transfer bound.

struct RiskInstance {
  DiscreteExperiment e1, e2;
  Matrix kernel, rule2, loss;
  double bound = 1.0;
};

namespace detail {

/// Dirichlet(1) row; one time in five a point mass instead.
inline std::vector<double> random_simplex_row(std::size_t m, RngStream& rng) {
  std::vector<double> row(m, 0.0);
  if (rng.uniform() < 0.2) {
    row[rng.index(m)] = 1.0;
    return row;
  }
  double s = 0.0;
  for (double& v : row) s += (v = -std::log(1.0 - rng.uniform()));
  for (double& v : row) v /= s;
  return row;
}

inline Matrix random_stochastic(std::size_t rows, std::size_t cols, RngStream& rng) {
  Matrix m(rows);
  for (auto& r : m) r = random_simplex_row(cols, rng);
  return m;
}

}  // namespace detail

/// |Theta| in [2, max_theta], outcome counts and action count in [2, max_outcomes].
/// Q_theta mixes K P_theta with an unrelated distribution, so eps ranges over [0, 1].
inline RiskInstance random_risk_instance(RngStream& rng, std::size_t max_theta = 4, std::size_t max_outcomes = 5,
                                         double bound = 1.0) {
  if (max_theta < 2 || max_outcomes < 2) throw std::invalid_argument("random_risk_instance: bounds must be >= 2");
  const std::size_t th = 2 + rng.index(max_theta - 1);
  const std::size_t m1 = 2 + rng.index(max_outcomes - 1), m2 = 2 + rng.index(max_outcomes - 1);
  const std::size_t actions = 2 + rng.index(max_outcomes - 1);
  RiskInstance inst;
  inst.bound = bound;
  inst.kernel = detail::random_stochastic(m1, m2, rng);
  const double mix = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
  for (std::size_t t = 0; t < th; ++t) {
    DiscreteDist p(detail::random_simplex_row(m1, rng));
    auto q = push_discrete(p, inst.kernel);
    const auto other = detail::random_simplex_row(m2, rng);
    double s = 0.0;
    for (std::size_t z = 0; z < m2; ++z) s += (q[z] = (1.0 - mix) * q[z] + mix * other[z]);
    for (double& v : q) v /= s;
    inst.e1.rows.push_back(std::move(p));
    inst.e2.rows.emplace_back(std::move(q));
  }
  inst.rule2 = detail::random_stochastic(m2, actions, rng);
  inst.loss.assign(th, std::vector<double>(actions));
  for (auto& row : inst.loss)
    for (double& v : row) v = bound * rng.uniform();
  return inst;
}

struct RiskBoundRow {
  std::size_t instance = 0, thetas = 0, outcomes1 = 0, outcomes2 = 0;
  RiskTransferResult result;
};

inline std::vector<RiskBoundRow> run_risk_bound(std::size_t instances, std::uint64_t seed, std::size_t max_theta = 4,
                                                std::size_t max_outcomes = 5, double bound = 1.0) {
  const RngStream base(seed, 0x7269736b);
  std::vector<RiskBoundRow> rows;
  rows.reserve(instances);
  for (std::size_t i = 0; i < instances; ++i) {
    RngStream rng = base.derive(i);
    const RiskInstance inst = random_risk_instance(rng, max_theta, max_outcomes, bound);
    rows.push_back({i, inst.e1.parameters(), inst.e1.outcomes(), inst.e2.outcomes(),
                    verify_risk_transfer(inst.e1, inst.e2, inst.kernel, inst.rule2, inst.loss, inst.bound)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Config binding and the run driver.

inline OptimizerConfig optimizer_from(const RunConfig& rc) {
  OptimizerConfig o;
  o.seed = rc.seed;
  o.steps = rc.get_uint("steps", o.steps);
  o.learning_rate = rc.get_double("learning_rate", o.learning_rate);
  o.batch_size = rc.get_uint("batch_size", o.batch_size);
  o.restarts = rc.get_uint("restarts", o.restarts);
  o.eval_size = rc.get_uint("eval_size", o.eval_size);
  const std::string init = rc.get_string("init", "moment-matched");
  if (init == "zeros") o.init = InitMode::Zeros;
  else if (init == "random") o.init = InitMode::Random;
  else if (init == "moment-matched") o.init = InitMode::MomentMatched;
  else throw ConfigError(rc.line_of("init"), "init must be zeros, random or moment-matched");
  return o;
}

inline GaussianShiftConfig gaussian_shift_from(const RunConfig& rc) {
  GaussianShiftConfig g;
  g.seed = rc.seed;
  g.dim = rc.get_uint("dim", g.dim);
  g.n = rc.get_uint("n", g.n);
  g.target_noise = rc.get_double("target_noise", g.target_noise);
  g.optimizer = optimizer_from(rc);
  return g;
}

inline control::ControlConfig control_from(const RunConfig& rc) {
  auto c = rc.experiment == Experiment::Control2d ? control::ControlConfig::two_d() : control::ControlConfig::one_d();
  c.seed = rc.seed;
  c.estimator.seed = rc.seed;
  c.horizon = rc.get_uint("horizon", c.horizon);
  c.episodes = rc.get_uint("episodes", c.episodes);
  c.train_episodes = rc.get_uint("train_episodes", c.train_episodes);
  c.s0_scale = rc.get_double("s0_scale", c.s0_scale);
  c.sigma_proc = rc.get_doubles("sigma_proc", c.sigma_proc);
  c.sigma_obs_source = rc.get_doubles("sigma_obs_source", c.sigma_obs_source);
  c.sigma_obs_target = rc.get_doubles("sigma_obs", c.sigma_obs_target);
  c.action_penalty = rc.get_double("action_penalty", c.action_penalty);
  c.mmd_weight = rc.get_double("invariant_weight", c.mmd_weight);
  c.mmd_pool = rc.get_uint("mmd_pool", c.mmd_pool);
  c.lecam_rounds = rc.get_uint("lecam_rounds", c.lecam_rounds);
  return c;
}

inline hla::HlaConfig hla_from(const RunConfig& rc) {
  hla::HlaConfig h;
  h.seed = rc.seed;
  h.n_train = rc.get_uint("n_train", h.n_train);
  h.n_test = rc.get_uint("n_test", h.n_test);
  h.em_iters = rc.get_uint("em_iters", h.em_iters);
  h.em_tol = rc.get_double("em_tol", h.em_tol);
  return h;
}

inline std::vector<std::string> verify_checks_from(const RunConfig& rc) {
  const std::vector<std::string> all{"a1", "a2", "a3", "b1", "d1"};
  if (!rc.has("checks")) return all;
  std::vector<std::string> out;
  std::string_view s = rc.overrides.at("checks");
  while (true) {
    const auto comma = s.find(',');
    const std::string name(detail::trim(s.substr(0, comma)));
    if (std::find(all.begin(), all.end(), name) == all.end())
      throw ConfigError(rc.line_of("checks"), "unknown check '" + name + "' (expected a1, a2, a3, b1, d1)");
    out.push_back(name);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

struct RunOutcome {
  int exit_code = 0;
  std::string payload;  // the data file contents
  std::string report;   // human-readable summary
  nlohmann::json manifest;
};

/// Runs one experiment. Configuration problems throw ConfigError before any
/// work starts; failures during the run are reported through exit code 1 and
/// the manifest's `error` field.
inline RunOutcome run(const RunConfig& rc) {
  rc.check_keys();
  const bool json = rc.format == Format::Json;
  RunOutcome out;
  out.manifest = {{"experiment", experiment_name(rc.experiment)},
                  {"config_hash", config_hash(rc)},
                  {"seed", rc.seed},
                  {"format", json ? "json" : "csv"},
                  {"version", kVersion}};

  // Bind and validate every knob before starting the clock.
  std::function<void(std::ostream&, std::ostream&)> body;
  try {
    switch (rc.experiment) {
      case Experiment::GaussianShift: {
        auto g = gaussian_shift_from(rc);
        g.optimizer.validate();
        body = [g, json](std::ostream& data, std::ostream& rep) {
          const auto r = run_gaussian_shift(g);
          if (json) data << to_json(r).dump(2) << '\n';
          else write_csv(data, r);
          rep << "forward " << r.gap.forward.divergence_final << "  reverse " << r.gap.reverse.divergence_final
              << "  sigma0_hat " << r.gap.forward.psi_star()[0] << " (true " << r.sigma0_true << ")\n";
        };
        break;
      }
      case Experiment::Control1d:
      case Experiment::Control2d: {
        auto c = control_from(rc);
        c.validate();
        body = [c, json](std::ostream& data, std::ostream& rep) {
          const auto r = control::evaluate_suite(c);
          if (json) data << to_json(r).dump(2) << '\n';
          else write_csv(data, r);
          for (const auto& row : r.rows)
            rep << row.policy << ' ' << control::domain_name(row.domain) << ' ' << row.mean_return << '\n';
        };
        break;
      }
      case Experiment::Hla: {
        const auto h = hla_from(rc);
        if (h.n_train == 0 || h.n_test == 0 || h.em_iters == 0) throw ConfigError(0, "hla: sizes must be positive");
        body = [h, json](std::ostream& data, std::ostream& rep) {
          const auto r = hla::run_hla(h);
          if (json) data << to_json(r).dump(2) << '\n';
          else write_csv(data, r);
          hla::write_csv(rep, r);
        };
        break;
      }
      case Experiment::Verify: {
        const auto checks = verify_checks_from(rc);
        const std::uint64_t seed = rc.seed;
        body = [checks, seed, json, &out](std::ostream& data, std::ostream& rep) {
          std::vector<verification::CheckReport> reports;
          for (const auto& name : checks) {
            if (name == "a1") reports.push_back(verification::check_a1_sufficiency(seed));
            if (name == "a2") reports.push_back(verification::check_a2_quantization(seed));
            if (name == "a3") reports.push_back(verification::check_a3_gaussian_regression(seed));
            if (name == "b1") reports.push_back(verification::check_b1_invariance_trap(seed));
            if (name == "d1") reports.push_back(verification::check_d1_proxy_blindness(seed));
          }
          if (json) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& r : reports) arr.push_back(verification::to_json(r));
            data << arr.dump(2) << '\n';
          } else {
            data << "check,passed,measure,value\n";
            for (const auto& r : reports)
              for (const auto& [k, v] : r.measured)
                data << r.name << ',' << (r.passed ? 1 : 0) << ',' << k << ',' << detail::format_double(v) << '\n';
          }
          verification::print_table(rep, reports);
          for (const auto& r : reports)
            if (!r.passed) out.exit_code = 1;
        };
        break;
      }
      case Experiment::RiskBound: {
        const auto n = rc.get_uint("instances", 1000);
        const auto mt = rc.get_uint("max_theta", 4), mo = rc.get_uint("max_outcomes", 5);
        const double b = rc.get_double("loss_bound", 1.0);
        if (mt < 2 || mo < 2) throw ConfigError(0, "risk-bound: max_theta and max_outcomes must be >= 2");
        if (!(b > 0.0)) throw ConfigError(rc.line_of("loss_bound"), "loss_bound must be positive");
        const std::uint64_t seed = rc.seed;
        body = [=, &out](std::ostream& data, std::ostream& rep) {
          const auto rows = run_risk_bound(n, seed, mt, mo, b);
          std::size_t held = 0;
          for (const auto& r : rows) held += r.result.holds ? 1 : 0;
          if (json) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& r : rows)
              arr.push_back({{"instance", r.instance}, {"thetas", r.thetas}, {"outcomes_1", r.outcomes1},
                             {"outcomes_2", r.outcomes2}, {"lhs", r.result.lhs}, {"rhs", r.result.rhs},
                             {"epsilon", r.result.epsilon}, {"holds", r.result.holds}});
            data << arr.dump(2) << '\n';
          } else {
            data << "instance,thetas,outcomes_1,outcomes_2,lhs,rhs,epsilon,holds\n";
            for (const auto& r : rows)
              data << r.instance << ',' << r.thetas << ',' << r.outcomes1 << ',' << r.outcomes2 << ','
                   << detail::format_double(r.result.lhs) << ',' << detail::format_double(r.result.rhs) << ','
                   << detail::format_double(r.result.epsilon) << ',' << (r.result.holds ? 1 : 0) << '\n';
          }
          rep << held << " / " << rows.size() << " instances satisfy the bound\n";
          if (held != rows.size()) out.exit_code = 1;
        };
        break;
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream data, rep;
  try {
    body(data, rep);
    out.manifest["status"] = out.exit_code == 0 ? "ok" : "failed";
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.manifest["status"] = "error";
    out.manifest["error"] = e.what();
  }
  out.manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.payload = data.str();
  out.report = rep.str();
  return out;
}

}  // namespace lecam
