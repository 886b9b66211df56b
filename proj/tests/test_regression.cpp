#include <gtest/gtest.h>

#include <cmath>

#include "lecam/regression.hpp"

using namespace lecam;
using namespace lecam::regression;

namespace {

struct Data {
  SampleSet x;
  std::vector<double> y;
};

Data linear_data(std::size_t n, const std::vector<double>& beta, double intercept, double noise, std::uint64_t seed) {
  RngStream rng(seed);
  Data d{SampleSet(beta.size()), {}};
  std::vector<double> row(beta.size());
  for (std::size_t i = 0; i < n; ++i) {
    double y = intercept + noise * rng.normal();
    for (std::size_t k = 0; k < beta.size(); ++k) y += beta[k] * (row[k] = rng.normal() + 0.5 * k);
    d.x.push_back(row);
    d.y.push_back(y);
  }
  return d;
}

}  // namespace

TEST(FitRidge, ExactRecoveryWithoutPenalty) {
  const auto d = linear_data(200, {1.5, -2.0, 0.25}, 3.0, 0.0, 1);
  const auto m = fit_ridge(d.x, d.y, 0.0);
  EXPECT_NEAR(m.weights[0], 1.5, 1e-9);
  EXPECT_NEAR(m.weights[1], -2.0, 1e-9);
  EXPECT_NEAR(m.weights[2], 0.25, 1e-9);
  EXPECT_NEAR(m.intercept, 3.0, 1e-9);
  EXPECT_NEAR(mse(m, d.x, d.y), 0.0, 1e-15);
}

TEST(FitRidge, OneDimensionalClosedForm) {
  // w = cov(x, y) / (var(x) + alpha) with population-normalized moments.
  const auto d = linear_data(500, {0.8}, -1.0, 0.5, 2);
  const double alpha = 0.3;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    mx += d.x(i, 0);
    my += d.y[i];
  }
  mx /= d.y.size();
  my /= d.y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    sxy += (d.x(i, 0) - mx) * (d.y[i] - my);
    sxx += (d.x(i, 0) - mx) * (d.x(i, 0) - mx);
  }
  const double w = (sxy / d.y.size()) / (sxx / d.y.size() + alpha);
  const auto m = fit_ridge(d.x, d.y, alpha);
  EXPECT_NEAR(m.weights[0], w, 1e-12);
  EXPECT_NEAR(m.intercept, my - w * mx, 1e-12);
}

TEST(FitRidge, PenaltyShrinksAndErrors) {
  const auto d = linear_data(300, {1.0, 1.0}, 0.0, 1.0, 3);
  auto norm = [](const LinearModel& m) { return std::hypot(m.weights[0], m.weights[1]); };
  EXPECT_LT(norm(fit_ridge(d.x, d.y, 10.0)), norm(fit_ridge(d.x, d.y, 0.1)));
  EXPECT_THROW(fit_ridge(d.x, {1.0}, 0.1), std::invalid_argument);
  EXPECT_THROW(fit_ridge(d.x, d.y, -1.0), std::invalid_argument);
}

TEST(FitOnSimulated, ZeroNoiseDuplicatesGiveSameFit) {
  const auto d = linear_data(200, {0.5, -0.2}, 1.0, 0.3, 4);
  const auto a = fit_ridge(d.x, d.y, 0.1);
  const auto b = fit_on_simulated(d.x, d.y, {0.0, 0.0}, 0.1, 3, 1);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(a.weights[k], b.weights[k], 1e-10);
  EXPECT_NEAR(a.intercept, b.intercept, 1e-10);
}

TEST(FitOnSimulated, NoiseAttenuatesNoisyFeature) {
  const auto d = linear_data(3000, {1.0, 1.0}, 0.0, 0.1, 5);
  const auto m = fit_on_simulated(d.x, d.y, {0.0, 2.0}, 0.0, 3, 2);
  // Classical errors-in-variables attenuation var / (var + sigma^2) = 1 / 5.
  EXPECT_NEAR(m.weights[1], 0.2, 0.05);
  EXPECT_NEAR(m.weights[0], 1.0, 0.05);
}

TEST(InvariantEncoder, NoPenaltyKeepsFullScale) {
  const auto s = linear_data(1000, {1.0, 0.5}, 0.0, 0.5, 6);
  const auto t = linear_data(1000, {1.0, 0.5}, 0.0, 0.5, 7);
  InvariantConfig cfg;
  cfg.mmd_weight = 0.0;
  cfg.steps = 100;
  const auto m = fit_invariant_encoder(s.x, s.y, t.x, cfg);
  for (double c : m.scale) EXPECT_GT(c, 0.9);
}

TEST(InvariantEncoder, ScalesStayInUnitInterval) {
  const auto s = linear_data(1000, {1.0, 0.5}, 0.0, 0.5, 8);
  auto t = linear_data(1000, {1.0, 0.5}, 0.0, 0.5, 9);
  RngStream rng(10);
  for (std::size_t i = 0; i < t.x.size(); ++i) t.x(i, 1) += 3.0 * rng.normal();
  InvariantConfig cfg;
  cfg.mmd_weight = 1000.0;
  cfg.steps = 150;
  const auto m = fit_invariant_encoder(s.x, s.y, t.x, cfg);
  for (double c : m.scale) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
  EXPECT_LT(m.scale[1], m.scale[0]);
  EXPECT_THROW(fit_invariant_encoder(s.x, s.y, SampleSet(10, 3), cfg), std::invalid_argument);
}
