#include <gtest/gtest.h>

#include "lecam/config.hpp"
#include "lecam/experiments.hpp"

using namespace lecam;

TEST(ParseConfig, EmptyGivesDefaults) {
  const auto c = parse_config("");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_TRUE(c.overrides.empty());
  EXPECT_EQ(c.format, Format::Csv);
  EXPECT_TRUE(c.out.empty());
}

TEST(ParseConfig, ScalarsVectorsAndComments) {
  const auto c = parse_config(
      "# control run\n"
      "seed = 7\n"
      "\n"
      "sigma_obs = 0.1,2.0   # per dimension\n"
      "format=json\r\n",
      Experiment::Control2d);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.format, Format::Json);
  EXPECT_EQ(c.get_doubles("sigma_obs", {}), (std::vector<double>{0.1, 2.0}));
  EXPECT_EQ(c.line_of("sigma_obs"), 4u);
}

TEST(ParseConfig, ExperimentKeyAndMismatch) {
  const auto c = parse_config("experiment = hla\nn_test = 50\n");
  EXPECT_EQ(c.experiment, Experiment::Hla);
  EXPECT_EQ(c.get_uint("n_test", 0), 50u);
  EXPECT_THROW(parse_config("experiment = hla\n", Experiment::Verify), ConfigError);
  EXPECT_THROW(parse_config("experiment = nope\n"), ConfigError);
}

TEST(ParseConfig, ErrorsCarryLineNumbers) {
  auto line_of_error = [](const std::string& text, std::optional<Experiment> e = std::nullopt) -> std::size_t {
    try {
      parse_config(text, e);
    } catch (const ConfigError& err) {
      EXPECT_NE(std::string(err.what()).find("line"), std::string::npos);
      return err.line();
    }
    ADD_FAILURE() << "no error for: " << text;
    return 0;
  };
  EXPECT_EQ(line_of_error("seed = 1\nbogus = 3\n"), 2u);
  EXPECT_EQ(line_of_error("# c\n\nn_train = 5\n", Experiment::Control1d), 3u);
  EXPECT_EQ(line_of_error("seed 4\n"), 1u);
  EXPECT_EQ(line_of_error("seed = -1\n"), 1u);
  EXPECT_EQ(line_of_error("seed = 1\nseed = 2\n"), 2u);
  EXPECT_EQ(line_of_error("format = xml\n"), 1u);
  EXPECT_EQ(line_of_error("horizon =\n"), 1u);
}

TEST(ParseConfig, TypedGettersReportBadValues) {
  const auto c = parse_config("horizon = ten\nsigma_obs = 1,x\n", Experiment::Control1d);
  EXPECT_THROW(c.get_uint("horizon", 1), ConfigError);
  EXPECT_THROW(c.get_doubles("sigma_obs", {}), ConfigError);
  EXPECT_EQ(c.get_uint("episodes", 9), 9u);
}

TEST(ConfigHash, DependsOnContentOnly) {
  const auto a = parse_config("seed = 3\nn_test = 10\n", Experiment::Hla);
  const auto b = parse_config("n_test = 10   # same\nseed = 3\n", Experiment::Hla);
  const auto c = parse_config("seed = 4\nn_test = 10\n", Experiment::Hla);
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Run, HlaPayloadIsReproducible) {
  auto cfg = parse_config("n_test = 200\nn_train = 2000\n", Experiment::Hla);
  const auto a = run(cfg), b = run(cfg);
  EXPECT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.payload, b.payload);
  EXPECT_EQ(a.manifest["config_hash"], b.manifest["config_hash"]);
  EXPECT_EQ(a.manifest["status"], "ok");
  EXPECT_TRUE(a.manifest.contains("wall_time_s"));
  EXPECT_EQ(a.manifest["version"], kVersion);
  cfg.format = Format::Json;
  const auto j = nlohmann::json::parse(run(cfg).payload);
  EXPECT_EQ(j["methods"].size(), 3u);
}

TEST(Run, RiskBoundAllHold) {
  auto cfg = parse_config("instances = 200\n", Experiment::RiskBound);
  const auto r = run(cfg);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(std::count(r.payload.begin(), r.payload.end(), '\n'), 201);
  EXPECT_NE(r.report.find("200 / 200"), std::string::npos);
}

TEST(Run, GaussianShiftJsonFields) {
  auto cfg = parse_config("dim = 3\nn = 600\nsteps = 50\nrestarts = 1\neval_size = 200\nformat = json\n",
                          Experiment::GaussianShift);
  const auto a = run(cfg);
  ASSERT_EQ(a.exit_code, 0) << a.manifest.dump();
  const auto j = nlohmann::json::parse(a.payload);
  for (const char* k : {"forward", "reverse", "sigma0_hat", "sigma0_true"}) EXPECT_TRUE(j.contains(k)) << k;
  for (const char* k : {"psi_star", "divergence_final", "trace", "converged"}) EXPECT_TRUE(j["forward"].contains(k)) << k;
  EXPECT_EQ(a.payload, run(cfg).payload);
}

TEST(Run, VerifySubset) {
  const auto r = run(parse_config("checks = d1, a1\n", Experiment::Verify));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.report.find("D1: Proxy Blindness"), std::string::npos);
  EXPECT_EQ(r.report.find("A2"), std::string::npos);
  EXPECT_THROW(run(parse_config("checks = z9\n", Experiment::Verify)), ConfigError);
}

TEST(Run, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(run(parse_config("sigma_obs = 1,2\n", Experiment::Control1d)), ConfigError);
  EXPECT_THROW(run(parse_config("init = sideways\n", Experiment::GaussianShift)), ConfigError);
  EXPECT_THROW(run(parse_config("n_test = 0\n", Experiment::Hla)), ConfigError);
  EXPECT_THROW(run(parse_config("max_theta = 1\n", Experiment::RiskBound)), ConfigError);
}
