#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lecam/divergences.hpp"
#include "lecam/markov_kernels.hpp"
#include "lecam/rng.hpp"

namespace lecam::hla {

enum class Locus { A, B };

struct Allele {
  Locus locus = Locus::A;
  std::string group;                   // "01" in A*01:01
  std::optional<std::string> protein;  // "01" in A*01:01; absent at low resolution

  bool low_res() const { return !protein.has_value(); }
  Allele low() const { return {locus, group, std::nullopt}; }
  Allele upgraded(const std::string& field) const { return {locus, group, field}; }

  std::string name() const {
    std::string s = locus == Locus::A ? "A*" : "B*";
    s += group;
    if (protein) s += ":" + *protein;
    return s;
  }

  auto operator<=>(const Allele&) const = default;
};

inline Allele parse_allele(Locus locus, const std::string& code) {
  const auto colon = code.find(':');
  if (code.empty() || colon == 0) throw std::invalid_argument("parse_allele: empty group in '" + code + "'");
  if (colon == std::string::npos) return {locus, code, std::nullopt};
  return {locus, code.substr(0, colon), code.substr(colon + 1)};
}

struct Haplotype {
  Allele allele_a;
  Allele allele_b;

  std::string name() const { return allele_a.name() + "~" + allele_b.name(); }
  auto operator<=>(const Haplotype&) const = default;
};

inline Haplotype haplotype(const std::string& a, const std::string& b) {
  return {parse_allele(Locus::A, a), parse_allele(Locus::B, b)};
}

/// Ordered pair; the order carries phase.
struct Diplotype {
  Haplotype h1;
  Haplotype h2;

  bool operator==(const Diplotype&) const = default;
};

/// Per-locus unordered low-resolution genotypes, each stored sorted.
struct Observation {
  std::array<Allele, 2> genotype_a;
  std::array<Allele, 2> genotype_b;

  std::string key() const {
    return genotype_a[0].name() + "/" + genotype_a[1].name() + " " + genotype_b[0].name() + "/" + genotype_b[1].name();
  }
  auto operator<=>(const Observation&) const = default;
};

struct Population {
  std::vector<Haplotype> haplotypes;
  DiscreteDist freqs;

  std::size_t size() const { return haplotypes.size(); }
  std::optional<std::size_t> index_of(const Haplotype& h) const {
    for (std::size_t i = 0; i < haplotypes.size(); ++i)
      if (haplotypes[i] == h) return i;
    return std::nullopt;
  }
};

/// The fixed 15-haplotype table. A*01:01~B*08:01 carries 15%; 37.5% of allele
/// mass sits on protein fields other than ":01"; several low-resolution
/// groups hide two high-resolution alleles (A*02, A*03, A*11, B*07, B*35, B*44).
/// The table does not depend on the seed.
inline Population build_population(std::uint64_t /*seed*/ = 0) {
  static const std::vector<std::tuple<const char*, const char*, double>> table = {
      {"01:01", "08:01", 0.15}, {"02:01", "07:02", 0.13}, {"02:01", "07:01", 0.01}, {"03:01", "07:02", 0.07},
      {"03:01", "07:01", 0.01}, {"03:01", "44:02", 0.03}, {"02:05", "44:02", 0.05}, {"02:01", "44:03", 0.08},
      {"11:01", "35:01", 0.07}, {"11:02", "35:01", 0.04}, {"24:02", "15:01", 0.07}, {"24:02", "35:03", 0.05},
      {"01:01", "57:01", 0.04}, {"26:01", "38:01", 0.07}, {"03:02", "15:01", 0.13},
  };
  Population pop;
  std::vector<double> f;
  for (const auto& [a, b, p] : table) {
    pop.haplotypes.push_back(haplotype(a, b));
    f.push_back(p);
  }
  pop.freqs = DiscreteDist(std::move(f));
  return pop;
}

/// Draws an index from a discrete distribution by inverse CDF.
inline std::size_t draw_index(const DiscreteDist& d, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    acc += d[i];
    if (u < acc) return i;
  }
  return d.size() - 1;
}

/// n individuals under Hardy-Weinberg equilibrium: h1, h2 iid from the table.
inline std::vector<Diplotype> sample_diplotypes(const Population& pop, std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0x686c61);
  std::vector<Diplotype> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = draw_index(pop.freqs, rng);
    const std::size_t b = draw_index(pop.freqs, rng);
    out.push_back({pop.haplotypes[a], pop.haplotypes[b]});
  }
  return out;
}

/// Resolution reduction followed by unphasing.
inline Observation degrade(const Diplotype& d) {
  Observation o{{d.h1.allele_a.low(), d.h2.allele_a.low()}, {d.h1.allele_b.low(), d.h2.allele_b.low()}};
  std::sort(o.genotype_a.begin(), o.genotype_a.end());
  std::sort(o.genotype_b.begin(), o.genotype_b.end());
  return o;
}

/// Haplotypes sorted so the same unordered pair always gives the same diplotype.
inline Diplotype canonical(Haplotype x, Haplotype y) {
  if (y < x) std::swap(x, y);
  return {std::move(x), std::move(y)};
}

/// Appends ":01" everywhere and pairs the sorted A alleles with the sorted B alleles.
inline Diplotype reconstruct_naive(const Observation& o) {
  return {{o.genotype_a[0].upgraded("01"), o.genotype_b[0].upgraded("01")},
          {o.genotype_a[1].upgraded("01"), o.genotype_b[1].upgraded("01")}};
}

using HaplotypePair = std::pair<std::size_t, std::size_t>;  // indices, first <= second

/// Unordered pairs of known haplotypes whose degraded image equals `o`.
inline std::vector<HaplotypePair> compatible_pairs(const Observation& o, const std::vector<Haplotype>& known) {
  std::vector<HaplotypePair> out;
  for (std::size_t i = 0; i < known.size(); ++i)
    for (std::size_t j = i; j < known.size(); ++j)
      if (degrade({known[i], known[j]}) == o) out.emplace_back(i, j);
  return out;
}

struct EmResult {
  std::vector<double> freqs;
  /// Log-likelihood of the observations before each update, then after the last one.
  std::vector<double> log_likelihood;
  std::size_t iterations = 0;

  bool monotone(double slack = 1e-9) const {
    for (std::size_t i = 1; i < log_likelihood.size(); ++i)
      if (log_likelihood[i] < log_likelihood[i - 1] - slack) return false;
    return true;
  }
};

/// Excoffier-Slatkin EM over a known haplotype dictionary, started from
/// uniform frequencies. Stops when the log-likelihood gain drops below `tol`.
inline EmResult em_fit(const std::vector<Observation>& observations, const std::vector<Haplotype>& known,
                       std::size_t iters = 200, double tol = 1e-8) {
  if (known.empty()) throw std::invalid_argument("em_fit: empty haplotype dictionary");
  if (observations.empty()) throw std::invalid_argument("em_fit: no observations");
  // Group identical observations.
  std::map<Observation, std::size_t> counts;
  for (const auto& o : observations) ++counts[o];
  std::vector<std::pair<std::vector<HaplotypePair>, double>> groups;
  for (const auto& [o, c] : counts) {
    auto pairs = compatible_pairs(o, known);
    if (pairs.empty()) throw std::invalid_argument("em_fit: observation " + o.key() + " has no compatible pair");
    groups.emplace_back(std::move(pairs), static_cast<double>(c));
  }

  const std::size_t h = known.size();
  const double n = static_cast<double>(observations.size());
  EmResult res;
  res.freqs.assign(h, 1.0 / static_cast<double>(h));
  auto pair_weight = [&](const HaplotypePair& p) {
    return res.freqs[p.first] * res.freqs[p.second] * (p.first == p.second ? 1.0 : 2.0);
  };
  auto log_likelihood = [&] {
    double ll = 0.0;
    for (const auto& [pairs, c] : groups) {
      double z = 0.0;
      for (const auto& p : pairs) z += pair_weight(p);
      ll += c * std::log(z);
    }
    return ll;
  };

  res.log_likelihood.push_back(log_likelihood());
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> expected(h, 0.0);
    for (const auto& [pairs, c] : groups) {
      double z = 0.0;
      for (const auto& p : pairs) z += pair_weight(p);
      for (const auto& p : pairs) {
        const double post = c * pair_weight(p) / z;
        expected[p.first] += post;
        expected[p.second] += post;
      }
    }
    for (std::size_t i = 0; i < h; ++i) res.freqs[i] = expected[i] / (2.0 * n);
    res.iterations = it + 1;
    res.log_likelihood.push_back(log_likelihood());
    const double gain = res.log_likelihood.back() - res.log_likelihood[res.log_likelihood.size() - 2];
    if (std::abs(gain) < tol) break;
  }
  return res;
}

/// Most probable compatible pair under HWE; ties go to the first pair in index order.
inline Diplotype reconstruct_em(const Observation& o, const std::vector<double>& freqs, const std::vector<Haplotype>& known) {
  if (freqs.size() != known.size()) throw std::invalid_argument("reconstruct_em: frequency vector size mismatch");
  const auto pairs = compatible_pairs(o, known);
  if (pairs.empty()) throw std::invalid_argument("reconstruct_em: observation " + o.key() + " has no compatible pair");
  double best = -1.0;
  HaplotypePair arg = pairs.front();
  for (const auto& p : pairs) {
    const double w = freqs[p.first] * freqs[p.second] * (p.first == p.second ? 1.0 : 2.0);
    if (w > best) {
      best = w;
      arg = p;
    }
  }
  return canonical(known[arg.first], known[arg.second]);
}

/// Empirical P(unordered high-res pair | observation) from simulated training pairs.
struct ConditionalModel {
  std::vector<Haplotype> haplotypes;
  std::map<Observation, std::vector<std::pair<HaplotypePair, double>>> table;
  std::map<Observation, std::size_t> hits;

  const std::vector<std::pair<HaplotypePair, double>>* find(const Observation& o) const {
    const auto it = table.find(o);
    return it == table.end() ? nullptr : &it->second;
  }
};

inline ConditionalModel lecam_fit(const Population& pop, std::size_t n_train = 10000, std::uint64_t seed = 0) {
  ConditionalModel model;
  model.haplotypes = pop.haplotypes;
  std::map<Observation, std::map<HaplotypePair, std::size_t>> counts;
  RngStream rng(seed, 0x6c6563616d);
  for (std::size_t n = 0; n < n_train; ++n) {
    std::size_t i = draw_index(pop.freqs, rng), j = draw_index(pop.freqs, rng);
    const Observation o = degrade({pop.haplotypes[i], pop.haplotypes[j]});
    if (j < i) std::swap(i, j);
    ++counts[o][{i, j}];
  }
  for (const auto& [o, row] : counts) {
    std::size_t total = 0;
    for (const auto& [p, c] : row) total += c;
    auto& out = model.table[o];
    for (const auto& [p, c] : row) out.emplace_back(p, static_cast<double>(c) / static_cast<double>(total));
    model.hits[o] = total;
  }
  return model;
}

struct LeCamReconstruction {
  Diplotype diplotype;
  bool fallback = false;  // key unseen in training; naive output used
};

inline LeCamReconstruction reconstruct_lecam(const Observation& o, const ConditionalModel& model, RngStream& rng) {
  const auto* row = model.find(o);
  if (!row) return {reconstruct_naive(o), true};
  const double u = rng.uniform();
  double acc = 0.0;
  HaplotypePair pick = row->back().first;
  for (const auto& [p, prob] : *row) {
    acc += prob;
    if (u < acc) {
      pick = p;
      break;
    }
  }
  return {canonical(model.haplotypes[pick.first], model.haplotypes[pick.second]), false};
}

/// Exact HWE posterior over compatible unordered pairs.
inline std::vector<std::pair<HaplotypePair, double>> exact_posterior(const Observation& o, const Population& pop) {
  std::vector<std::pair<HaplotypePair, double>> out;
  double z = 0.0;
  for (const auto& p : compatible_pairs(o, pop.haplotypes)) {
    const double w = pop.freqs[p.first] * pop.freqs[p.second] * (p.first == p.second ? 1.0 : 2.0);
    out.emplace_back(p, w);
    z += w;
  }
  for (auto& e : out) e.second /= z;
  return out;
}

struct Metrics {
  double allele_acc = 0.0;
  double haplotype_acc = 0.0;
  double phase_acc = 0.0;
  double freq_corr = 0.0;
  std::size_t double_heterozygotes = 0;
};

namespace detail {

template <typename T>
std::size_t multiset_overlap(std::array<T, 2> x, std::array<T, 2> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0, hits = 0;
  while (i < 2 && j < 2) {
    if (x[i] == y[j]) {
      ++hits;
      ++i;
      ++j;
    } else if (x[i] < y[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return hits;
}

inline std::array<std::pair<Allele, Allele>, 2> low_pairing(const Diplotype& d) {
  std::array<std::pair<Allele, Allele>, 2> p{std::pair{d.h1.allele_a.low(), d.h1.allele_b.low()},
                                            std::pair{d.h2.allele_a.low(), d.h2.allele_b.low()}};
  std::sort(p.begin(), p.end());
  return p;
}

}  // namespace detail

/// Frequency of each known haplotype among the 2n haplotypes in `ds`;
/// haplotypes outside the list count toward the denominator only.
inline std::vector<double> haplotype_frequencies(const std::vector<Diplotype>& ds, const std::vector<Haplotype>& known) {
  std::vector<double> f(known.size(), 0.0);
  for (const auto& d : ds)
    for (const auto* h : {&d.h1, &d.h2})
      for (std::size_t i = 0; i < known.size(); ++i)
        if (known[i] == *h) f[i] += 1.0;
  for (double& v : f) v /= 2.0 * static_cast<double>(ds.size());
  return f;
}

/// Allele slots are matched per locus as unordered pairs, so phase does not
/// affect allele accuracy. Phase accuracy is taken over individuals whose
/// truth is heterozygous at both loci at low resolution, comparing the
/// low-resolution A-B pairings.
inline Metrics score(const std::vector<Diplotype>& truth, const std::vector<Diplotype>& pred,
                     const std::vector<Haplotype>& known) {
  if (truth.size() != pred.size()) throw std::invalid_argument("score: truth and prediction lengths differ");
  if (truth.empty()) throw std::invalid_argument("score: empty input");
  Metrics m;
  std::size_t alleles = 0, haps = 0, phased = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& t = truth[i];
    const auto& p = pred[i];
    alleles += detail::multiset_overlap(std::array{t.h1.allele_a, t.h2.allele_a}, std::array{p.h1.allele_a, p.h2.allele_a});
    alleles += detail::multiset_overlap(std::array{t.h1.allele_b, t.h2.allele_b}, std::array{p.h1.allele_b, p.h2.allele_b});
    haps += detail::multiset_overlap(std::array{t.h1, t.h2}, std::array{p.h1, p.h2});
    const bool het_a = t.h1.allele_a.low() != t.h2.allele_a.low();
    const bool het_b = t.h1.allele_b.low() != t.h2.allele_b.low();
    if (het_a && het_b) {
      ++m.double_heterozygotes;
      if (detail::low_pairing(t) == detail::low_pairing(p)) ++phased;
    }
  }
  const double n = static_cast<double>(truth.size());
  m.allele_acc = static_cast<double>(alleles) / (4.0 * n);
  m.haplotype_acc = static_cast<double>(haps) / (2.0 * n);
  m.phase_acc = m.double_heterozygotes ? static_cast<double>(phased) / static_cast<double>(m.double_heterozygotes) : 1.0;
  m.freq_corr = pearson_correlation(haplotype_frequencies(truth, known), haplotype_frequencies(pred, known));
  return m;
}

struct HlaConfig {
  std::uint64_t seed = 42;
  std::size_t n_train = 10000;
  std::size_t n_test = 1000;
  std::size_t em_iters = 500;
  double em_tol = 1e-10;
};

struct MethodRow {
  std::string method;
  Metrics metrics;
};

struct HlaResult {
  std::vector<MethodRow> rows;  // naive, em, lecam
  EmResult em;
  std::size_t lecam_fallbacks = 0;

  const Metrics& metrics(const std::string& method) const {
    for (const auto& r : rows)
      if (r.method == method) return r.metrics;
    throw std::out_of_range("HlaResult: no method " + method);
  }
};

/// Samples a test cohort, degrades it, and scores the three reconstructors.
/// EM is fitted on the test observations themselves; Le Cam learns from
/// n_train simulated pairs drawn independently of the test cohort.
inline HlaResult run_hla(const HlaConfig& cfg) {
  const Population pop = build_population(cfg.seed);
  const auto truth = sample_diplotypes(pop, cfg.n_test, cfg.seed);
  std::vector<Observation> obs;
  obs.reserve(truth.size());
  for (const auto& d : truth) obs.push_back(degrade(d));

  HlaResult res;
  res.em = em_fit(obs, pop.haplotypes, cfg.em_iters, cfg.em_tol);
  const ConditionalModel model = lecam_fit(pop, cfg.n_train, cfg.seed);
  RngStream rng(cfg.seed, 0x7265636f6e);
  std::vector<Diplotype> naive, em, lc;
  for (const auto& o : obs) {
    naive.push_back(reconstruct_naive(o));
    em.push_back(reconstruct_em(o, res.em.freqs, pop.haplotypes));
    const auto r = reconstruct_lecam(o, model, rng);
    lc.push_back(r.diplotype);
    res.lecam_fallbacks += r.fallback;
  }
  res.rows = {{"naive", score(truth, naive, pop.haplotypes)},
              {"em", score(truth, em, pop.haplotypes)},
              {"lecam", score(truth, lc, pop.haplotypes)}};
  return res;
}

inline void write_population_csv(std::ostream& os, const Population& pop) {
  os << "haplotype,freq\n";
  for (std::size_t i = 0; i < pop.size(); ++i)
    os << pop.haplotypes[i].name() << ',' << lecam::detail::format_double(pop.freqs[i]) << '\n';
}

inline void write_csv(std::ostream& os, const HlaResult& res) {
  using lecam::detail::format_double;
  os << "method,allele_acc,haplotype_acc,phase_acc,freq_corr\n";
  for (const auto& r : res.rows)
    os << r.method << ',' << format_double(r.metrics.allele_acc) << ',' << format_double(r.metrics.haplotype_acc) << ','
       << format_double(r.metrics.phase_acc) << ',' << format_double(r.metrics.freq_corr) << '\n';
}

inline nlohmann::json to_json(const HlaResult& res) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : res.rows)
    rows.push_back({{"method", r.method},
                    {"allele_acc", r.metrics.allele_acc},
                    {"haplotype_acc", r.metrics.haplotype_acc},
                    {"phase_acc", r.metrics.phase_acc},
                    {"freq_corr", r.metrics.freq_corr},
                    {"double_heterozygotes", r.metrics.double_heterozygotes}});
  return {{"methods", rows},
          {"em_iterations", res.em.iterations},
          {"em_log_likelihood", res.em.log_likelihood},
          {"em_monotone", res.em.monotone()},
          {"lecam_fallbacks", res.lecam_fallbacks}};
}

}  // namespace lecam::hla
