#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lecam/markov_kernels.hpp"

namespace lecam {

inline constexpr const char* kVersion = "0.1.0";

enum class Experiment { GaussianShift, Control1d, Control2d, Hla, Verify, RiskBound };
enum class Format { Csv, Json };

inline std::string_view experiment_name(Experiment e) {
  switch (e) {
    case Experiment::GaussianShift: return "gaussian-shift";
    case Experiment::Control1d: return "control-1d";
    case Experiment::Control2d: return "control-2d";
    case Experiment::Hla: return "hla";
    case Experiment::Verify: return "verify";
    case Experiment::RiskBound: return "risk-bound";
  }
  return "?";
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
  for (auto e : {Experiment::GaussianShift, Experiment::Control1d, Experiment::Control2d, Experiment::Hla,
                 Experiment::Verify, Experiment::RiskBound})
    if (experiment_name(e) == s) return e;
  return std::nullopt;
}

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& msg)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Keys accepted in a config file for each experiment, besides
/// `experiment`, `seed`, `format` and `out`.
inline const std::vector<std::string>& experiment_keys(Experiment e) {
  static const std::vector<std::string> gaussian{"dim", "n", "target_noise", "steps", "learning_rate",
                                                 "batch_size", "restarts", "eval_size", "init"};
  static const std::vector<std::string> control{"horizon", "episodes", "train_episodes", "s0_scale",
                                                "sigma_proc", "sigma_obs_source", "sigma_obs", "action_penalty",
                                                "invariant_weight", "mmd_pool", "lecam_rounds"};
  static const std::vector<std::string> hla{"n_train", "n_test", "em_iters", "em_tol"};
  static const std::vector<std::string> verify{"checks"};
  static const std::vector<std::string> risk{"instances", "max_theta", "max_outcomes", "loss_bound"};
  switch (e) {
    case Experiment::GaussianShift: return gaussian;
    case Experiment::Control1d:
    case Experiment::Control2d: return control;
    case Experiment::Hla: return hla;
    case Experiment::Verify: return verify;
    case Experiment::RiskBound: return risk;
  }
  return verify;
}

struct RunConfig {
  Experiment experiment = Experiment::Verify;
  bool experiment_set = false;
  std::uint64_t seed = 42;
  std::map<std::string, std::string> overrides;
  std::map<std::string, std::size_t> lines;  // where each key was set; 0 = command line
  std::string out;
  Format format = Format::Csv;

  bool has(const std::string& key) const { return overrides.count(key) != 0; }

  std::size_t line_of(const std::string& key) const {
    auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    try {
      return detail::parse_double(overrides.at(key));
    } catch (const std::exception&) {
      throw ConfigError(line_of(key), "'" + key + "' expects a number, got '" + overrides.at(key) + "'");
    }
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = overrides.at(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError(line_of(key), "'" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    try {
      return detail::parse_double_list(overrides.at(key));
    } catch (const std::exception&) {
      throw ConfigError(line_of(key), "'" + key + "' expects a comma-separated list of numbers");
    }
  }

  std::string get_string(const std::string& key, std::string fallback) const {
    return has(key) ? overrides.at(key) : fallback;
  }

  /// Rejects keys that the selected experiment does not read.
  void check_keys() const {
    const auto& allowed = experiment_keys(experiment);
    for (const auto& [k, v] : overrides)
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        throw ConfigError(line_of(k), "unknown key '" + k + "' for experiment " + std::string(experiment_name(experiment)));
  }

  /// Stable text form used for hashing: everything that affects the data files.
  std::string canonical() const {
    std::string s = "experiment=" + std::string(experiment_name(experiment)) + "\nseed=" + std::to_string(seed) +
                    "\nformat=" + (format == Format::Csv ? "csv" : "json") + "\n";
    for (const auto& [k, v] : overrides) s += k + "=" + v + "\n";
    return s;
  }
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(cfg.canonical())));
  return buf;
}

inline void set_format(RunConfig& cfg, std::string_view v, std::size_t line) {
  if (v == "csv") cfg.format = Format::Csv;
  else if (v == "json") cfg.format = Format::Json;
  else throw ConfigError(line, "format must be csv or json, got '" + std::string(v) + "'");
}

/// Parses `key = value` lines. `#` starts a comment. If the file names no
/// experiment, `experiment` (normally the CLI subcommand) decides which keys are
/// valid; without either, every documented key is accepted.
inline RunConfig parse_config(std::string_view text, std::optional<Experiment> experiment = std::nullopt) {
  RunConfig cfg;
  if (experiment) {
    cfg.experiment = *experiment;
    cfg.experiment_set = true;
  }
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(lineno, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(lineno, "missing key");
    if (value.empty()) throw ConfigError(lineno, "missing value for '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(lineno, "duplicate key '" + key + "'");
    if (key == "experiment") {
      auto e = parse_experiment(value);
      if (!e) throw ConfigError(lineno, "unknown experiment '" + value + "'");
      if (experiment && *e != *experiment)
        throw ConfigError(lineno, "config is for " + value + " but " + std::string(experiment_name(*experiment)) + " was requested");
      cfg.experiment = *e;
      cfg.experiment_set = true;
    } else if (key == "seed") {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) throw ConfigError(lineno, "seed must be a non-negative integer");
      cfg.seed = v;
    } else if (key == "format") {
      set_format(cfg, value, lineno);
    } else if (key == "out") {
      cfg.out = value;
    } else {
      cfg.overrides[key] = value;
      cfg.lines[key] = lineno;
    }
  }
  if (cfg.experiment_set) {
    cfg.check_keys();
  } else {
    for (const auto& [k, v] : cfg.overrides) {
      bool known = false;
      for (auto e : {Experiment::GaussianShift, Experiment::Control1d, Experiment::Hla, Experiment::Verify,
                     Experiment::RiskBound}) {
        const auto& keys = experiment_keys(e);
        known = known || std::find(keys.begin(), keys.end(), k) != keys.end();
      }
      if (!known) throw ConfigError(cfg.line_of(k), "unknown key '" + k + "'");
    }
  }
  return cfg;
}

}  // namespace lecam
