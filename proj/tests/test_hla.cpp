#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "lecam/hla.hpp"

using namespace lecam;
using namespace lecam::hla;

namespace {

// The individual shown in the documentation: A*01:01~B*08:01 / A*02:01~B*07:02.
Diplotype example() { return {haplotype("01:01", "08:01"), haplotype("02:01", "07:02")}; }

}  // namespace

TEST(Population, TableProperties) {
  const auto pop = build_population();
  EXPECT_EQ(pop.size(), 15u);
  double total = 0.0, off01 = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    total += pop.freqs[i];
    // Each haplotype carries two alleles; count allele mass off ":01".
    off01 += pop.freqs[i] * ((*pop.haplotypes[i].allele_a.protein != "01") + (*pop.haplotypes[i].allele_b.protein != "01")) / 2.0;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(pop.freqs[*pop.index_of(haplotype("01:01", "08:01"))], 0.15);
  EXPECT_GE(off01, 0.30);
  EXPECT_LE(off01, 0.45);
  EXPECT_EQ(std::set<Haplotype>(pop.haplotypes.begin(), pop.haplotypes.end()).size(), 15u);
  EXPECT_EQ(build_population(1).haplotypes, build_population(2).haplotypes);
}

TEST(Population, ExactNaiveAlleleAccuracyInBand) {
  // Naive is right on an allele exactly when its protein field is ":01".
  const auto pop = build_population();
  double acc = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i)
    acc += pop.freqs[i] * ((*pop.haplotypes[i].allele_a.protein == "01") + (*pop.haplotypes[i].allele_b.protein == "01")) / 2.0;
  EXPECT_GE(acc, 0.55);
  EXPECT_LE(acc, 0.70);
}

TEST(SampleDiplotypes, FrequenciesAndHardyWeinberg) {
  const auto pop = build_population();
  EXPECT_TRUE(sample_diplotypes(pop, 0, 1).empty());
  const std::size_t n = 100000;
  const auto ds = sample_diplotypes(pop, n, 7);
  const auto f = haplotype_frequencies(ds, pop.haplotypes);
  for (std::size_t i = 0; i < pop.size(); ++i) EXPECT_NEAR(f[i], pop.freqs[i], 0.01);
  const auto top = haplotype("01:01", "08:01");
  std::size_t homo = 0;
  for (const auto& d : ds) homo += d.h1 == top && d.h2 == top;
  const double p = 0.15 * 0.15, se = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(static_cast<double>(homo) / n, p, 3.0 * se);
  EXPECT_EQ(sample_diplotypes(pop, 50, 3), sample_diplotypes(pop, 50, 3));
}

TEST(Degrade, ExampleAndSymmetry) {
  const auto o = degrade(example());
  EXPECT_EQ(o.genotype_a[0].name(), "A*01");
  EXPECT_EQ(o.genotype_a[1].name(), "A*02");
  EXPECT_EQ(o.genotype_b[0].name(), "B*07");
  EXPECT_EQ(o.genotype_b[1].name(), "B*08");
  EXPECT_EQ(degrade({example().h2, example().h1}), o);
  const auto h = haplotype("24:02", "15:01");
  const auto homo = degrade({h, h});
  EXPECT_EQ(homo.genotype_a[0], homo.genotype_a[1]);
  EXPECT_EQ(homo.genotype_b[0], homo.genotype_b[1]);
}

TEST(ReconstructNaive, UpgradeAndLexicographicPairing) {
  const auto d = reconstruct_naive(degrade(example()));
  EXPECT_EQ(d.h1, haplotype("01:01", "07:01"));
  EXPECT_EQ(d.h2, haplotype("02:01", "08:01"));
  EXPECT_EQ(parse_allele(Locus::A, "01").upgraded("01").name(), "A*01:01");
  const auto h = haplotype("26:01", "38:01");
  const auto homo = reconstruct_naive(degrade({h, h}));
  EXPECT_EQ(homo.h1, homo.h2);
}

TEST(EmFit, SingleHaplotypeAndUnambiguousCounts) {
  const std::vector<Haplotype> one{haplotype("01:01", "08:01")};
  const std::vector<Observation> obs(10, degrade({one[0], one[0]}));
  const auto r = em_fit(obs, one, 10);
  EXPECT_DOUBLE_EQ(r.freqs[0], 1.0);

  // Two haplotypes with distinct low-res images: every observation resolves uniquely.
  const std::vector<Haplotype> two{haplotype("01:01", "08:01"), haplotype("26:01", "38:01")};
  std::vector<Observation> o2;
  for (int i = 0; i < 3; ++i) o2.push_back(degrade({two[0], two[0]}));
  for (int i = 0; i < 5; ++i) o2.push_back(degrade({two[0], two[1]}));
  for (int i = 0; i < 2; ++i) o2.push_back(degrade({two[1], two[1]}));
  const auto r2 = em_fit(o2, two, 50);
  EXPECT_NEAR(r2.freqs[0], (2 * 3 + 5) / 20.0, 1e-12);
  EXPECT_NEAR(r2.freqs[1], (5 + 2 * 2) / 20.0, 1e-12);
}

TEST(EmFit, RecoversTwoHaplotypeToy) {
  // Double heterozygote phase ambiguity: the other phasing is in the dictionary too.
  const std::vector<Haplotype> known{haplotype("01:01", "08:01"), haplotype("02:01", "07:02"),
                                     haplotype("01:01", "07:02"), haplotype("02:01", "08:01")};
  const Population pop{{known[0], known[1]}, DiscreteDist({0.7, 0.3})};
  const auto ds = sample_diplotypes(pop, 10000, 4);
  std::vector<Observation> obs;
  for (const auto& d : ds) obs.push_back(degrade(d));
  const auto r = em_fit(obs, known, 500, 1e-12);
  EXPECT_NEAR(r.freqs[0], 0.7, 0.02);
  EXPECT_NEAR(r.freqs[1], 0.3, 0.02);
  EXPECT_TRUE(r.monotone());
}

TEST(EmFit, LogLikelihoodMonotoneAcrossSeeds) {
  const auto pop = build_population();
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::vector<Observation> obs;
    for (const auto& d : sample_diplotypes(pop, 1000, s)) obs.push_back(degrade(d));
    const auto r = em_fit(obs, pop.haplotypes, 300, 1e-12);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i) EXPECT_GE(r.log_likelihood[i], r.log_likelihood[i - 1] - 1e-9);
    double s1 = 0.0;
    for (double f : r.freqs) s1 += f;
    EXPECT_NEAR(s1, 1.0, 1e-9);
  }
}

TEST(EmFit, Errors) {
  const auto pop = build_population();
  EXPECT_THROW(em_fit({}, pop.haplotypes), std::invalid_argument);
  EXPECT_THROW(em_fit({degrade(example())}, {}), std::invalid_argument);
  EXPECT_THROW(em_fit({degrade({haplotype("68:01", "51:01"), haplotype("68:01", "51:01")})}, pop.haplotypes),
               std::invalid_argument);
}

TEST(ReconstructEm, MaximalProductPair) {
  const auto pop = build_population();
  const auto o = degrade(example());
  const auto d = reconstruct_em(o, pop.freqs.probs(), pop.haplotypes);
  // Oracle: enumerate the compatible pairs and take the largest 2 f_i f_j.
  const auto post = exact_posterior(o, pop);
  auto best = post.front();
  for (const auto& e : post)
    if (e.second > best.second) best = e;
  EXPECT_EQ(d, canonical(pop.haplotypes[best.first.first], pop.haplotypes[best.first.second]));
  EXPECT_TRUE(d.h1 == haplotype("01:01", "08:01") || d.h2 == haplotype("01:01", "08:01"));
  EXPECT_EQ(d, reconstruct_em(o, pop.freqs.probs(), pop.haplotypes));
  const auto h = haplotype("26:01", "38:01");
  EXPECT_EQ(reconstruct_em(degrade({h, h}), pop.freqs.probs(), pop.haplotypes), canonical(h, h));
}

TEST(LeCamFit, TableIsAConditionalOverCompatiblePairs) {
  const auto pop = build_population();
  const auto model = lecam_fit(pop, 10000, 3);
  for (const auto& [o, row] : model.table) {
    const auto compat = compatible_pairs(o, pop.haplotypes);
    double s = 0.0;
    for (const auto& [p, prob] : row) {
      EXPECT_NE(std::find(compat.begin(), compat.end(), p), compat.end()) << o.key();
      s += prob;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(LeCamFit, MatchesExactPosteriorAtExampleKey) {
  const auto pop = build_population();
  const auto o = degrade(example());
  const auto model = lecam_fit(pop, 10000, 42);
  const auto* row = model.find(o);
  ASSERT_NE(row, nullptr);
  for (const auto& [p, exact] : exact_posterior(o, pop)) {
    double got = 0.0;
    for (const auto& [q, prob] : *row)
      if (q == p) got = prob;
    EXPECT_NEAR(got, exact, 0.03);
  }
}

TEST(LeCamFit, ConvergesWithMoreTraining) {
  // Paired over seeds, on keys with at least 100 hits in the larger model.
  const auto pop = build_population();
  auto tv_at = [&](const ConditionalModel& model, const Observation& o) {
    const auto* row = model.find(o);
    if (!row) return 1.0;
    double d = 0.0;
    for (const auto& [p, exact] : exact_posterior(o, pop)) {
      double got = 0.0;
      for (const auto& [q, prob] : *row)
        if (q == p) got = prob;
      d += std::abs(got - exact);
    }
    return 0.5 * d;
  };
  int better = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto big = lecam_fit(pop, 10000, s), small = lecam_fit(pop, 1000, s + 100);
    double tv_big = 0.0, tv_small = 0.0;
    for (const auto& [o, hits] : big.hits) {
      if (hits < 100) continue;
      tv_big += tv_at(big, o);
      tv_small += tv_at(small, o);
    }
    better += tv_big < tv_small;
  }
  EXPECT_GE(better, 9);
}

TEST(ReconstructLeCam, SingleSupportAndFallback) {
  const auto pop = build_population();
  const auto model = lecam_fit(pop, 10000, 1);
  const auto h = haplotype("26:01", "38:01");
  RngStream rng(2);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(reconstruct_lecam(degrade({h, h}), model, rng).diplotype, canonical(h, h));
  const auto odd = degrade({haplotype("68:01", "51:01"), h});
  const auto r = reconstruct_lecam(odd, model, rng);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.diplotype, reconstruct_naive(odd));
}

TEST(Reconstructors, OutputsAreCompatibleWithObservation) {
  const auto pop = build_population();
  const auto truth = sample_diplotypes(pop, 500, 9);
  std::vector<Observation> obs;
  for (const auto& d : truth) obs.push_back(degrade(d));
  const auto em = em_fit(obs, pop.haplotypes, 200);
  const auto model = lecam_fit(pop, 10000, 9);
  RngStream rng(1);
  for (const auto& o : obs) {
    EXPECT_EQ(degrade(reconstruct_naive(o)), o);
    EXPECT_EQ(degrade(reconstruct_em(o, em.freqs, pop.haplotypes)), o);
    EXPECT_EQ(degrade(reconstruct_lecam(o, model, rng).diplotype), o);
  }
}

TEST(Score, PerfectAndPhaseSwapped) {
  const auto pop = build_population();
  const auto truth = sample_diplotypes(pop, 400, 5);
  const auto m = score(truth, truth, pop.haplotypes);
  EXPECT_EQ(m.allele_acc, 1.0);
  EXPECT_EQ(m.haplotype_acc, 1.0);
  EXPECT_EQ(m.phase_acc, 1.0);
  EXPECT_NEAR(m.freq_corr, 1.0, 1e-12);
  // Swap the B alleles between the two haplotypes of every double heterozygote.
  auto swapped = truth;
  for (auto& d : swapped)
    if (d.h1.allele_a.low() != d.h2.allele_a.low() && d.h1.allele_b.low() != d.h2.allele_b.low())
      std::swap(d.h1.allele_b, d.h2.allele_b);
  const auto s = score(truth, swapped, pop.haplotypes);
  EXPECT_EQ(s.allele_acc, 1.0);
  EXPECT_EQ(s.phase_acc, 0.0);
  EXPECT_GT(s.double_heterozygotes, 0u);
  EXPECT_THROW(score(truth, {}, pop.haplotypes), std::invalid_argument);
}

TEST(RunHla, MetricBoundsAndCsvShape) {
  HlaConfig cfg;
  cfg.seed = 7;
  const auto r = run_hla(cfg);
  for (const auto& row : r.rows) {
    for (double v : {row.metrics.allele_acc, row.metrics.haplotype_acc, row.metrics.phase_acc}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(row.metrics.freq_corr, -1.0);
    EXPECT_LE(row.metrics.freq_corr, 1.0);
  }
  EXPECT_GE(r.metrics("lecam").freq_corr, r.metrics("em").freq_corr);
  std::ostringstream os;
  write_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "method,allele_acc,haplotype_acc,phase_acc,freq_corr");
  EXPECT_EQ(lines[1].rfind("naive,", 0), 0u);
  EXPECT_EQ(lines[2].rfind("em,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("lecam,", 0), 0u);
}
