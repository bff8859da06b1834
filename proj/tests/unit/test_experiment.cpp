#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "landau/experiment.hpp"

using namespace landau;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("landau_lab_test_" + name);
  fs::remove_all(dir);
  return dir;
}

bool mentions(const ConfigError& e, const std::string& needle) {
  for (const auto& v : e.violations())
    if (v.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Config, MinimalSpectrumEchoesDefaults) {
  const auto cfg = validate_config_json(json::parse(R"({"experiment": "spectrum"})"));
  EXPECT_EQ(cfg.kind, "spectrum");
  EXPECT_EQ(cfg.resolved["model"]["onsite_shift"], 4.0);
  EXPECT_EQ(cfg.resolved["spectrum"]["boundary"], "periodic");
  EXPECT_EQ(cfg.resolved["seed"], 0);
  EXPECT_EQ(cfg.resolved["measure"]["kind"], "stretched_exp");
}

TEST(Config, DivisibilityViolation) {
  try {
    validate_config_json(json::parse(R"({"experiment": "spectrum", "model": {"L": 10, "flux_p": 1, "flux_q": 3}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "L must be divisible by flux_q"));
  }
}

TEST(Config, NegativeLambdaNamesTheField) {
  try {
    validate_config_json(json::parse(R"({"experiment": "spectrum", "model": {"lambda": -1}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "lambda must be >= 0"));
  }
}

TEST(Config, CollectsAllViolations) {
  try {
    validate_config_json(json::parse(
        R"({"experiment": "ids", "model": {"L": 10, "flux_q": 3, "lambda": -1}, "extra": 1, "ids": {"n_energies": 1, "typo": 2}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "divisible"));
    EXPECT_TRUE(mentions(e, "lambda must be >= 0"));
    EXPECT_TRUE(mentions(e, "extra: unknown key"));
    EXPECT_TRUE(mentions(e, "ids.typo: unknown key"));
    EXPECT_TRUE(mentions(e, "ids.n_energies"));
    EXPECT_GE(e.violations().size(), 5u);
  }
}

TEST(Config, GapRegimeRejectsZeroLambda) {
  try {
    validate_config_json(json::parse(
        R"({"experiment": "wegner", "model": {"L": 12, "flux_p": 1, "flux_q": 3},
            "wegner": {"regime": "spectral_gap", "lambdas": [0.0], "intervals": [{"center": 2.6, "width": 0.1}]}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "(0,1] required in regime (c)"));
  }
}

TEST(Config, WrongTypesAndUnknownExperiment) {
  try {
    validate_config_json(json::parse(R"({"experiment": "nope", "seed": "x"})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "experiment must be one of"));
    EXPECT_TRUE(mentions(e, "seed"));
  }
}

TEST(Config, UnreadableFile) { EXPECT_THROW(validate_config("/nonexistent/config.json"), ConfigError); }

TEST(Run, SampleCheckPassesAndIsDeterministic) {
  const auto dir = scratch("sample");
  auto doc = json::parse(R"({"experiment": "sample_check", "model": {"alpha": 2.0}, "sample_check": {"n_samples": 20000}})");
  doc["output_dir"] = dir.string();
  const auto first = run_experiment(validate_config_json(doc));
  EXPECT_TRUE(first.passed());
  EXPECT_FALSE(first.verdicts.empty());
  const auto csv1 = slurp(dir / "sample_check.csv");
  RunOptions opt;
  opt.workers = 3;
  const auto second = run_experiment(validate_config_json(doc), opt);
  EXPECT_EQ(csv1, slurp(dir / "sample_check.csv"));
  EXPECT_EQ(slurp(dir / "resolved_config.json").find("workers"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / ".staging"));
  for (const auto& f : second.files) EXPECT_EQ(sha256_hex(slurp(dir / f.name)), f.sha256);
}

TEST(Run, SeedOverrideChangesSamples) {
  const auto dir = scratch("seed");
  auto doc = json::parse(R"({"experiment": "sample_check", "sample_check": {"n_samples": 5000}})");
  doc["output_dir"] = dir.string();
  run_experiment(validate_config_json(doc));
  const auto a = slurp(dir / "sample_check.csv");
  RunOptions opt;
  opt.seed = 99;
  const auto m = run_experiment(validate_config_json(doc), opt);
  EXPECT_NE(a, slurp(dir / "sample_check.csv"));
  EXPECT_EQ(m.resolved_config["seed"], 99);
}

TEST(Run, ComponentErrorsAreRecorded) {
  const auto dir = scratch("leak");
  auto doc = json::parse(R"({"experiment": "dynamics", "model": {"L": 14, "flux_p": 1, "flux_q": 2},
      "dynamics": {"filter": {"center": 4.0, "half_width": 3.0}, "T": [5], "n_realizations": 1}})");
  doc["output_dir"] = dir.string();
  const auto m = run_experiment(validate_config_json(doc));
  EXPECT_FALSE(m.passed());
  ASSERT_EQ(m.errors.size(), 1u);
  EXPECT_NE(m.errors[0].find("boundary layer"), std::string::npos);
  EXPECT_TRUE(m.summary.contains("max_admissible_time"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(Report, PassingRunSaysPass) {
  const auto dir = scratch("report");
  auto doc = json::parse(R"({"experiment": "sample_check", "sample_check": {"n_samples": 5000}})");
  doc["output_dir"] = dir.string();
  run_experiment(validate_config_json(doc));
  const auto text = emit_report(dir / "manifest.json");
  EXPECT_NE(text.find("PASS  P(|omega| > 0.5)"), std::string::npos);
  EXPECT_NE(text.find("overall    : PASS"), std::string::npos);
}

TEST(Report, FailedVerdictNamesTheCell) {
  const auto dir = scratch("failed");
  fs::create_directories(dir);
  RunManifest m;
  m.kind = "wegner";
  m.verdicts.push_back({"E tr E(Delta) / L^2 constant across L", false, 0.31, 0.15, "cell L=18, Delta=[1.6, 1.67]"});
  std::ofstream(dir / "manifest.json") << m.to_json().dump();
  const auto text = emit_report(dir / "manifest.json");
  EXPECT_NE(text.find("FAIL"), std::string::npos);
  EXPECT_NE(text.find("L=18"), std::string::npos);
  EXPECT_NE(text.find("0.31"), std::string::npos);
}

TEST(Report, EmptyManifestAndMissingFiles) {
  const auto dir = scratch("empty");
  fs::create_directories(dir);
  RunManifest m;
  std::ofstream(dir / "manifest.json") << m.to_json().dump();
  EXPECT_NE(emit_report(dir / "manifest.json").find("no verdicts"), std::string::npos);
  m.files.push_back({"gone.csv", 3, "00"});
  std::ofstream(dir / "manifest.json") << m.to_json().dump();
  EXPECT_THROW(emit_report(dir / "manifest.json"), SpecError);
}

TEST(Config, GapWindowNeedsOrderedPair) {
  try {
    validate_config_json(json::parse(
        R"({"experiment": "chern", "model": {"L": 10, "flux_p": 1, "flux_q": 5},
            "chern": {"energies": [1.9], "gap_window": [2.0, 1.5]}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "gap_window"));
  }
}

TEST(Run, CleanGapWindowStaysEmpty) {
  const auto dir = scratch("gap_window");
  auto doc = json::parse(R"({"experiment": "chern", "model": {"L": 10, "flux_p": 1, "flux_q": 5},
                             "chern": {"energies": [1.8747], "gap_window": [1.4863, 2.2632]}})");
  doc["output_dir"] = dir.string();
  const auto m = run_experiment(validate_config_json(doc));
  ASSERT_TRUE(m.errors.empty());
  bool saw_ids = false;
  for (const auto& v : m.verdicts) {
    if (v.claim.find("IDS increment") != std::string::npos) {
      saw_ids = true;
      EXPECT_FALSE(v.pass);  // no clean state lives in the gap
    } else {
      EXPECT_TRUE(v.pass) << v.claim;
    }
  }
  EXPECT_TRUE(saw_ids);
  EXPECT_EQ(m.summary["gap_ids_increment"].get<double>(), 0.0);
  EXPECT_NE(slurp(dir / "gap_states.csv").find("states_in_window"), std::string::npos);
}
