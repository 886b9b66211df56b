#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / ("lecam_cli_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = std::string(LECAM_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  fs::remove(log);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("lecam_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, HlaCsvAndManifest) {
  const auto out = dir / "r.csv";
  const auto r = run("hla --seed 7 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(out);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.rfind("method,allele_acc,haplotype_acc,phase_acc,freq_corr\n", 0), 0u);
  const auto m = nlohmann::json::parse(slurp(dir / "r.csv.manifest.json"));
  EXPECT_EQ(m["seed"], 7);
  EXPECT_EQ(m["experiment"], "hla");
  EXPECT_EQ(m["status"], "ok");
  for (const char* k : {"config_hash", "wall_time_s", "version"}) EXPECT_TRUE(m.contains(k)) << k;
}

TEST_F(Cli, RerunsAreByteIdentical) {
  const auto cfg = write_config("small.cfg", "n = 600\ndim = 3\nsteps = 40\nrestarts = 1\neval_size = 200\n");
  for (const std::string exp : {"hla", "risk-bound", "gaussian-shift"}) {
    for (const std::string fmt : {"csv", "json"}) {
      const std::string extra = exp == "gaussian-shift" ? " --config " + cfg.string() : "";
      const auto a = dir / (exp + "_a." + fmt), b = dir / (exp + "_b." + fmt);
      ASSERT_EQ(run(exp + extra + " --format " + fmt + " --out " + a.string()).code, 0) << exp;
      ASSERT_EQ(run(exp + extra + " --format " + fmt + " --out " + b.string()).code, 0) << exp;
      EXPECT_EQ(slurp(a), slurp(b)) << exp << ' ' << fmt;
      EXPECT_FALSE(slurp(a).empty());
      if (fmt == "json") EXPECT_NO_THROW((void)nlohmann::json::parse(slurp(a))) << exp;
    }
  }
}

TEST_F(Cli, ControlRerunsAreByteIdentical) {
  const auto cfg = write_config("ctl.cfg", "episodes = 20\ntrain_episodes = 40\nmmd_pool = 300\nlecam_rounds = 1\n");
  for (const std::string exp : {"control-1d", "control-2d"}) {
    const auto a = dir / (exp + "_a.csv"), b = dir / (exp + "_b.csv");
    ASSERT_EQ(run(exp + " --config " + cfg.string() + " --out " + a.string()).code, 0);
    ASSERT_EQ(run(exp + " --config " + cfg.string() + " --out " + b.string()).code, 0);
    const std::string csv = slurp(a);
    EXPECT_EQ(csv, slurp(b)) << exp;
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7) << exp;
  }
}

TEST_F(Cli, GaussianShiftJsonOnStdout) {
  const auto cfg = write_config("gs.cfg", "n = 600\ndim = 3\nsteps = 40\nrestarts = 1\neval_size = 200\n");
  const auto r = run("gaussian-shift --seed 42 --format json --config " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.contains("sigma0_hat"));
  EXPECT_TRUE(j["forward"].contains("psi_star"));
  EXPECT_TRUE(j["reverse"].contains("divergence_final"));
}

TEST_F(Cli, VerifyPrintsTable) {
  const auto cfg = write_config("v.cfg", "checks = a1,d1\n");
  const auto r = run("verify --config " + cfg.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Hypothesis"), std::string::npos);
  EXPECT_NE(r.out.find("Confirmed"), std::string::npos);
  EXPECT_EQ(run("verify --quiet --config " + cfg.string()).out, "");
}

TEST_F(Cli, UsageErrorsExitTwo) {
  const auto bad = write_config("bad.cfg", "seed = 3\nbanana = 1\n");
  const auto r = run("hla --config " + bad.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("line 2"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("banana"), std::string::npos);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("hla --format xml").code, 2);
  EXPECT_EQ(run("hla --config /nonexistent/x.cfg").code, 2);
  const auto vec = write_config("vec.cfg", "sigma_obs = 1,2\n");
  EXPECT_EQ(run("control-1d --config " + vec.string()).code, 2);
}

TEST_F(Cli, ConfigSeedAndFlagPrecedence) {
  const auto cfg = write_config("s.cfg", "seed = 9\nn_test = 100\nn_train = 500\n");
  const auto a = dir / "a.csv", b = dir / "b.csv";
  ASSERT_EQ(run("hla --config " + cfg.string() + " --out " + a.string()).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "a.csv.manifest.json"))["seed"], 9);
  ASSERT_EQ(run("hla --seed 5 --config " + cfg.string() + " --out " + b.string()).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "b.csv.manifest.json"))["seed"], 5);
}

TEST_F(Cli, UnwritableOutputExitsOne) {
  const auto r = run("risk-bound --out /nonexistent/dir/r.csv");
  EXPECT_EQ(r.code, 1);
}
