// landau-lab: validate, run and report disordered magnetic lattice experiments.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "landau/experiment.hpp"

namespace {

int validate_cmd(const std::string& config) {
  const auto cfg = landau::validate_config(config);
  std::cout << cfg.resolved.dump(2) << "\n";
  return 0;
}

int run_cmd(const std::string& config, const landau::RunOptions& opt) {
  auto cfg = landau::validate_config(config);
  const auto manifest = landau::run_experiment(std::move(cfg), opt);
  const auto out = std::filesystem::path(opt.output_dir.value_or(manifest.resolved_config.value("output_dir", "results")));
  std::cout << landau::emit_report(out / "manifest.json");
  return manifest.passed() ? 0 : 1;
}

int report_cmd(const std::string& out_dir) {
  std::filesystem::path p(out_dir);
  if (std::filesystem::is_directory(p)) p /= "manifest.json";
  const auto text = landau::emit_report(p);
  std::cout << text;
  return landau::load_manifest(p).passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disordered magnetic lattice experiments"};
  app.set_version_flag("--version", std::string(LANDAU_LAB_VERSION));
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;

  auto* validate = app.add_subcommand("validate", "check a config and print it with all defaults resolved");
  validate->add_option("--config", config, "config file (JSON)")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "run the experiment described by a config");
  run->add_option("--config", config, "config file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the base seed");
  run->add_option("--workers", workers, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "output directory (overrides output_dir)");

  auto* report = app.add_subcommand("report", "summarize a finished run from its manifest");
  report->add_option("--out", out, "output directory or manifest path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return validate_cmd(config);
    if (*run) {
      landau::RunOptions opt;
      opt.seed = seed;
      opt.workers = workers;
      if (!out.empty()) opt.output_dir = out;
      return run_cmd(config, opt);
    }
    if (*report) return report_cmd(out);
  } catch (const landau::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
