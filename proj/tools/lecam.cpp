#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lecam/config.hpp"
#include "lecam/experiments.hpp"

namespace {

bool write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  f << contents;
  return static_cast<bool>(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Le Cam deficiency experiments"};
  app.set_version_flag("--version", lecam::kVersion);
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  std::string config_path, out_path, format;
  bool quiet = false;

  const std::vector<std::pair<lecam::Experiment, std::string>> commands = {
      {lecam::Experiment::GaussianShift, "Directional deficiency between clean and noisy Gaussians"},
      {lecam::Experiment::Control1d, "Scalar control with a noisy sensor"},
      {lecam::Experiment::Control2d, "Two-dimensional control with anisotropic sensor noise"},
      {lecam::Experiment::Hla, "HLA haplotype reconstruction"},
      {lecam::Experiment::Verify, "Sanity-check battery"},
      {lecam::Experiment::RiskBound, "Risk-transfer bound on random discrete experiments"}};
  std::vector<std::pair<CLI::App*, lecam::Experiment>> subs;
  for (const auto& [e, help] : commands) {
    CLI::App* sub = app.add_subcommand(std::string(lecam::experiment_name(e)), help);
    sub->add_option("--seed", seed, "Random seed")->default_val(42);
    sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "Data file; a manifest is written next to it");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--quiet", quiet, "Suppress the summary");
    subs.emplace_back(sub, e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  lecam::Experiment experiment = lecam::Experiment::Verify;
  CLI::App* chosen = nullptr;
  for (const auto& [sub, e] : subs)
    if (sub->parsed()) {
      experiment = e;
      chosen = sub;
    }

  lecam::RunConfig cfg;
  try {
    std::string text;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      std::stringstream ss;
      ss << f.rdbuf();
      text = ss.str();
    }
    cfg = lecam::parse_config(text, experiment);
    // Command-line flags win over the file.
    if (chosen->count("--seed") || config_path.empty()) cfg.seed = seed;
    if (!out_path.empty()) cfg.out = out_path;
    if (!format.empty()) lecam::set_format(cfg, format, 0);
  } catch (const lecam::ConfigError& e) {
    std::cerr << "lecam: " << (config_path.empty() ? "" : config_path + ": ") << e.what() << '\n';
    return 2;
  }

  lecam::RunOutcome res;
  try {
    res = lecam::run(cfg);
  } catch (const lecam::ConfigError& e) {
    std::cerr << "lecam: " << e.what() << '\n';
    return 2;
  }

  if (cfg.out.empty()) {
    if (experiment != lecam::Experiment::Verify) std::cout << res.payload;
  } else {
    res.manifest["outputs"] = {cfg.out};
    if (!write_file(cfg.out, res.payload)) {
      std::cerr << "lecam: cannot write " << cfg.out << '\n';
      res.exit_code = 1;
    }
    if (!write_file(cfg.out + ".manifest.json", res.manifest.dump(2) + "\n")) {
      std::cerr << "lecam: cannot write manifest for " << cfg.out << '\n';
      res.exit_code = 1;
    }
  }
  if (!quiet && (experiment == lecam::Experiment::Verify || !cfg.out.empty())) std::cout << res.report;
  if (res.manifest.contains("error")) std::cerr << "lecam: " << res.manifest["error"].get<std::string>() << '\n';
  return res.exit_code;
}
