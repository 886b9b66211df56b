#pragma once

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lecam/rng.hpp"
#include "lecam/sample_set.hpp"

namespace lecam {

enum class KernelFamily { Identity, AdditiveGaussian, Quantization, HlaDegrade };

inline std::string_view family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::Identity: return "identity";
    case KernelFamily::AdditiveGaussian: return "additive_gaussian";
    case KernelFamily::Quantization: return "quantization";
    case KernelFamily::HlaDegrade: return "hla_degrade";
  }
  return "unknown";
}

/// A parametric Markov kernel family together with its current parameters.
///
/// AdditiveGaussian takes one sigma per dimension, or a single sigma shared by
/// every dimension (the tied form). Quantization takes one bin width.
/// HlaDegrade acts on genotype records and is applied through lecam::hla.
struct KernelSpec {
  KernelFamily family = KernelFamily::Identity;
  std::vector<double> params;

  static KernelSpec identity() { return {KernelFamily::Identity, {}}; }
  static KernelSpec additive_gaussian(std::vector<double> sigma) {
    KernelSpec k{KernelFamily::AdditiveGaussian, std::move(sigma)};
    k.validate();
    return k;
  }
  static KernelSpec quantization(double delta) {
    KernelSpec k{KernelFamily::Quantization, {delta}};
    k.validate();
    return k;
  }
  static KernelSpec hla_degrade() { return {KernelFamily::HlaDegrade, {}}; }

  bool tied() const { return family == KernelFamily::AdditiveGaussian && params.size() == 1; }

  /// Noise scale applied to dimension k (AdditiveGaussian only).
  double sigma(std::size_t k) const { return tied() ? params[0] : params[k]; }

  void validate() const {
    switch (family) {
      case KernelFamily::Identity:
      case KernelFamily::HlaDegrade:
        if (!params.empty()) throw std::invalid_argument(std::string(family_name(family)) + " takes no parameters");
        break;
      case KernelFamily::AdditiveGaussian:
        if (params.empty()) throw std::invalid_argument("additive_gaussian: sigma must be non-empty");
        for (double s : params)
          if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("additive_gaussian: sigma must be >= 0");
        break;
      case KernelFamily::Quantization:
        if (params.size() != 1 || !(params[0] > 0.0) || !std::isfinite(params[0]))
          throw std::invalid_argument("quantization: bin width must be a single positive value");
        break;
    }
  }

  void require_dim(std::size_t dim) const {
    if (family == KernelFamily::AdditiveGaussian && !tied() && params.size() != dim) {
      throw std::invalid_argument("additive_gaussian: " + std::to_string(params.size()) +
                                  " sigmas for data of dim " + std::to_string(dim));
    }
    if (family == KernelFamily::HlaDegrade) {
      throw std::invalid_argument("hla_degrade acts on genotype records; use lecam::hla::degrade");
    }
  }

  bool operator==(const KernelSpec&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<double> parse_double_list(std::string_view s) {
  std::vector<double> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(parse_double(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace detail

/// Renders `family=additive_gaussian; sigma=4.899,0` style text.
inline std::string to_config_string(const KernelSpec& k) {
  std::string out = "family=" + std::string(family_name(k.family));
  if (k.params.empty()) return out;
  out += k.family == KernelFamily::Quantization ? "; delta=" : "; sigma=";
  for (std::size_t i = 0; i < k.params.size(); ++i) {
    if (i) out += ',';
    out += detail::format_double(k.params[i]);
  }
  return out;
}

inline KernelSpec parse_kernel_spec(std::string_view text) {
  KernelSpec k;
  bool have_family = false;
  while (!detail::trim(text).empty()) {
    const auto semi = text.find(';');
    const auto item = detail::trim(text.substr(0, semi));
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("kernel spec: expected key=value, got '" + std::string(item) + "'");
    const auto key = detail::trim(item.substr(0, eq));
    const auto value = detail::trim(item.substr(eq + 1));
    if (key == "family") {
      if (value == "identity") k.family = KernelFamily::Identity;
      else if (value == "additive_gaussian") k.family = KernelFamily::AdditiveGaussian;
      else if (value == "quantization") k.family = KernelFamily::Quantization;
      else if (value == "hla_degrade") k.family = KernelFamily::HlaDegrade;
      else throw std::invalid_argument("kernel spec: unknown family '" + std::string(value) + "'");
      have_family = true;
    } else if (key == "sigma" || key == "delta") {
      k.params = detail::parse_double_list(value);
    } else {
      throw std::invalid_argument("kernel spec: unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_family) throw std::invalid_argument("kernel spec: missing family");
  k.validate();
  return k;
}

/// Empirical pushforward: one kernel draw per input point. The output depends
/// only on the points, the kernel parameters and the random stream.
inline SampleSet apply_kernel(const KernelSpec& k, const SampleSet& x, RngStream& rng) {
  k.validate();
  if (x.empty()) throw std::invalid_argument("apply_kernel: empty input");
  k.require_dim(x.dim());
  SampleSet out = x;
  switch (k.family) {
    case KernelFamily::Identity:
      break;
    case KernelFamily::AdditiveGaussian:
      for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t d = 0; d < out.dim(); ++d) out(i, d) += k.sigma(d) * rng.normal();
      break;
    case KernelFamily::Quantization: {
      const double delta = k.params[0];
      for (double& v : out.data()) v = delta * std::floor(v / delta) + 0.5 * delta;
      break;
    }
    case KernelFamily::HlaDegrade:
      break;  // rejected by require_dim
  }
  return out;
}

/// Reparameterized AdditiveGaussian pushforward z = x + sigma * eps with a
/// caller-supplied noise matrix.
inline SampleSet pathwise_apply(const KernelSpec& k, const SampleSet& x, const SampleSet& eps) {
  if (k.family != KernelFamily::AdditiveGaussian)
    throw std::invalid_argument("pathwise_apply: " + std::string(family_name(k.family)) + " has no pathwise form");
  k.validate();
  k.require_dim(x.dim());
  if (eps.size() != x.size() || eps.dim() != x.dim()) throw std::invalid_argument("pathwise_apply: noise shape mismatch");
  SampleSet out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t d = 0; d < out.dim(); ++d) out(i, d) += k.sigma(d) * eps(i, d);
  return out;
}

}  // namespace lecam
