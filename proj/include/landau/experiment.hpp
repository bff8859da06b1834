#pragma once

// Experiment orchestration: config validation, deterministic runs, atomic
// persistence of results with a checksummed manifest, and plain-text
// reports read back from the manifest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "landau/common.hpp"
#include "landau/csv.hpp"
#include "landau/dynamics.hpp"
#include "landau/measures.hpp"
#include "landau/model.hpp"
#include "landau/spectral.hpp"
#include "landau/stats.hpp"
#include "landau/topology.hpp"
#include "landau/verdict.hpp"
#include "landau/wegner.hpp"

#ifndef LANDAU_LAB_VERSION
#define LANDAU_LAB_VERSION "0.0.0"
#endif

namespace landau {

using nlohmann::json;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"spectrum",     "ids",           "wegner",   "spectral_averaging",
                                              "gap_survival", "chern",         "mobility_edge", "dynamics",
                                              "sample_check"};
  return kinds;
}

/// Thrown by validate_config with every violation found.
class ConfigError : public SpecError {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : SpecError(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid config:";
    for (const auto& m : v) s += "\n  - " + m;
    return s;
  }
  std::vector<std::string> violations_;
};

namespace detail {

inline std::string type_name(const json& j) {
  return std::string(j.type_name());
}

/// Reads one JSON object, fills defaults into the resolved echo, records
/// type/constraint violations and, on finish(), any key nobody asked for.
class Section {
 public:
  Section(const json* source, json* resolved, std::string path, std::vector<std::string>* errors)
      : src_(source), out_(resolved), path_(std::move(path)), errors_(errors) {
    if (src_ && !src_->is_object()) {
      errors_->push_back(path_ + ": expected an object, got " + type_name(*src_));
      src_ = nullptr;
    }
    if (!out_->is_object()) *out_ = json::object();
  }

  bool has(const std::string& key) const { return src_ && src_->contains(key); }

  template <class T>
  T get(const std::string& key, T fallback, const std::function<std::optional<std::string>(const T&)>& check = {}) {
    used_.insert(key);
    T value = fallback;
    if (has(key)) {
      if constexpr (std::is_unsigned_v<T>) {
        if (!src_->at(key).is_number_unsigned()) {
          errors_->push_back(where(key) + ": must be a non-negative integer");
          (*out_)[key] = fallback;
          return fallback;
        }
      }
      try {
        value = src_->at(key).get<T>();
      } catch (const json::exception&) {
        errors_->push_back(where(key) + ": wrong type (" + type_name(src_->at(key)) + ")");
        (*out_)[key] = fallback;
        return fallback;
      }
    }
    if (check)
      if (auto msg = check(value)) errors_->push_back(where(key) + " " + *msg);
    (*out_)[key] = value;
    return value;
  }

  template <class T>
  std::optional<T> required(const std::string& key, const std::function<std::optional<std::string>(const T&)>& check = {}) {
    if (!has(key)) {
      used_.insert(key);
      errors_->push_back(where(key) + ": required");
      return std::nullopt;
    }
    return get<T>(key, T{}, check);
  }

  Section sub(const std::string& key) {
    used_.insert(key);
    const json* child = has(key) ? &src_->at(key) : nullptr;
    return Section(child, &(*out_)[key], where(key), errors_);
  }

  void finish() const {
    if (!src_) return;
    for (const auto& [key, value] : src_->items())
      if (!used_.count(key)) errors_->push_back(where(key) + ": unknown key");
  }

  const std::string& path() const noexcept { return path_; }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void error(const std::string& msg) { errors_->push_back(msg); }

 private:
  const json* src_;
  json* out_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> used_;
};

template <class T>
std::function<std::optional<std::string>(const T&)> at_least(T lo) {
  return [lo](const T& v) -> std::optional<std::string> {
    if (v < lo) return "must be >= " + brief(static_cast<double>(lo));
    return std::nullopt;
  };
}

inline std::function<std::optional<std::string>(const double&)> positive() {
  return [](const double& v) -> std::optional<std::string> {
    if (!(v > 0.0) || !std::isfinite(v)) return "must be > 0";
    return std::nullopt;
  };
}

inline std::function<std::optional<std::string>(const std::string&)> one_of(std::vector<std::string> allowed) {
  return [allowed](const std::string& v) -> std::optional<std::string> {
    if (std::find(allowed.begin(), allowed.end(), v) != allowed.end()) return std::nullopt;
    std::string s = "must be one of";
    for (const auto& a : allowed) s += " " + a;
    return s;
  };
}

inline std::function<std::optional<std::string>(const std::vector<double>&)> nonempty_positive() {
  return [](const std::vector<double>& v) -> std::optional<std::string> {
    if (v.empty()) return "must not be empty";
    for (double x : v)
      if (!(x > 0.0)) return "entries must be > 0";
    return std::nullopt;
  };
}

inline std::function<std::optional<std::string>(const std::vector<double>&)> nonempty_list() {
  return [](const std::vector<double>& v) -> std::optional<std::string> {
    if (v.empty()) return "must not be empty";
    return std::nullopt;
  };
}

}  // namespace detail

struct ExperimentConfig {
  std::string kind;
  ModelSpec spec;
  Measure measure = StretchedExpMeasure(2.0);
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string output_dir = "results";
  json resolved;  // full config with defaults, as echoed next to results

  /// kind-specific section of the resolved config
  const json& params() const { return resolved.at(kind); }
};

/// Parse, default and validate a config document. All violations are
/// collected before throwing ConfigError.
inline ExperimentConfig validate_config_json(const json& doc) {
  std::vector<std::string> errors;
  ExperimentConfig cfg;
  json resolved = json::object();
  detail::Section root(&doc, &resolved, "", &errors);
  if (!doc.is_object()) throw ConfigError({"config root must be an object"});

  cfg.kind = root.required<std::string>("experiment", detail::one_of(experiment_kinds())).value_or("");
  cfg.seed = root.get<std::uint64_t>("seed", 0);
  cfg.workers = root.get<std::size_t>("workers", 1, detail::at_least<std::size_t>(1));
  cfg.output_dir = root.get<std::string>("output_dir", "results");

  {
    auto m = root.sub("model");
    auto& s = cfg.spec;
    s.L = m.get<int>("L", 12);
    s.flux_p = m.get<int>("flux_p", 0);
    s.flux_q = m.get<int>("flux_q", 1);
    s.lambda = m.get<double>("lambda", 0.0);
    s.alpha = m.get<double>("alpha", 2.0);
    s.hopping = m.get<double>("hopping", 1.0);
    s.onsite_shift = m.get<double>("onsite_shift", 4.0);
    for (const auto& v : s.violations()) errors.push_back("model: " + v);
    m.finish();
  }
  {
    auto m = root.sub("measure");
    const auto kind = m.get<std::string>("kind", "stretched_exp",
                                         detail::one_of({"stretched_exp", "uniform", "point_mass", "empirical"}));
    try {
      if (kind == "stretched_exp") {
        const double a = m.get<double>("alpha", cfg.spec.alpha, detail::positive());
        if (a > 0.0) cfg.measure = StretchedExpMeasure(a);
      } else if (kind == "uniform") {
        const double lo = m.get<double>("lo", -1.0);
        const double hi = m.get<double>("hi", 1.0);
        if (!(hi > lo)) m.error("measure: hi must exceed lo");
        else cfg.measure = UniformMeasure{lo, hi};
      } else if (kind == "point_mass") {
        cfg.measure = PointMass{m.get<double>("at", 0.0)};
      } else if (kind == "empirical") {
        const auto samples = m.required<std::vector<double>>("samples", detail::nonempty_list());
        if (samples && !samples->empty()) cfg.measure = EmpiricalMeasure(*samples);
      }
    } catch (const SpecError& e) {
      errors.push_back(std::string("measure: ") + e.what());
    }
    m.finish();
  }

  const bool stretched = std::holds_alternative<StretchedExpMeasure>(cfg.measure);
  for (const auto& other : experiment_kinds())
    if (other != cfg.kind && root.has(other)) {
      root.sub(other);  // mark as seen; reported below
      errors.push_back(other + ": section does not belong to experiment '" + cfg.kind + "'");
    }

  auto p = root.sub(cfg.kind.empty() ? "_" : cfg.kind);
  const auto& spec = cfg.spec;
  auto lambda_range = [](bool allow_zero) {
    return [allow_zero](const std::vector<double>& v) -> std::optional<std::string> {
      if (v.empty()) return "must not be empty";
      for (double l : v)
        if (!(l <= 1.0) || l < 0.0 || (!allow_zero && l == 0.0))
          return allow_zero ? "entries must lie in [0, 1]" : "entries must lie in (0, 1]";
      return std::nullopt;
    };
  };

  if (cfg.kind == "spectrum") {
    p.get<double>("theta1", 0.0);
    p.get<double>("theta2", 0.0);
    p.get<std::string>("boundary", "periodic", detail::one_of({"periodic", "open"}));
    p.get<double>("band_threshold", 0.05, detail::positive());
  } else if (cfg.kind == "ids") {
    const double lo = p.get<double>("e_min", -1.0);
    const double hi = p.get<double>("e_max", 9.0);
    if (!(hi > lo)) p.error("ids.e_max must exceed ids.e_min");
    p.get<int>("n_energies", 101, detail::at_least(2));
    p.get<std::size_t>("n_realizations", 50, detail::at_least<std::size_t>(1));
    p.get<std::vector<double>>("hoelder_deltas", {});
  } else if (cfg.kind == "wegner") {
    const auto regime = p.get<std::string>("regime", "general",
                                           detail::one_of({"general", "hoelder_ids", "spectral_gap", "a", "b", "c"}));
    const bool gap = regime == "spectral_gap" || regime == "c";
    p.get<std::vector<double>>("lambdas", {spec.lambda}, lambda_range(!gap));
    if (gap) {
      // echo the constraint in the wording users look for
      const auto& lambdas = p.has("lambdas") ? doc.at("wegner").at("lambdas") : json::array({spec.lambda});
      for (const auto& l : lambdas)
        if (l.is_number() && l.get<double>() == 0.0) {
          errors.push_back("wegner.lambdas: lambda ∈ (0,1] required in regime (c)");
          break;
        }
    }
    const auto sizes = p.get<std::vector<int>>("sizes", {spec.L});
    for (int L : sizes) {
      ModelSpec s = spec;
      s.L = L;
      const auto model_level = spec.violations();
      for (const auto& v : s.violations())
        if (std::find(model_level.begin(), model_level.end(), v) == model_level.end())
          errors.push_back("wegner.sizes: L = " + std::to_string(L) + ": " + v);
    }
    const auto intervals = p.required<json>("intervals");
    if (intervals) {
      if (!intervals->is_array() || intervals->empty()) {
        errors.push_back("wegner.intervals: must be a non-empty array of {center, width}");
      } else {
        for (const auto& iv : *intervals)
          if (!iv.is_object() || !iv.contains("center") || !iv.contains("width") || iv.size() != 2 ||
              !iv["center"].is_number() || !iv["width"].is_number() || !(iv["width"].get<double>() > 0.0))
            errors.push_back("wegner.intervals: each entry needs numeric center and positive width, nothing else");
      }
    }
    p.get<std::size_t>("n_realizations", 200, detail::at_least<std::size_t>(30));
    p.get<std::vector<double>>("q_orders", {4.0, 2.0}, detail::nonempty_list());
    p.get<double>("linearity_tolerance", 0.15, detail::positive());
    if (!stretched) errors.push_back("wegner: requires a stretched_exp measure");
  } else if (cfg.kind == "spectral_averaging") {
    p.get<std::size_t>("dimension", 64, detail::at_least<std::size_t>(4));
    p.get<std::size_t>("n_trials", 50, detail::at_least<std::size_t>(1));
    p.get<double>("background_lambda", 0.5, detail::at_least(0.0));
  } else if (cfg.kind == "gap_survival") {
    p.get<double>("eps", 2.0, detail::positive());
    p.get<std::size_t>("n_realizations", 10000, detail::at_least<std::size_t>(1));
    if (!stretched) errors.push_back("gap_survival: requires a stretched_exp measure");
    if (!(spec.lambda > 0.0 && spec.lambda <= 1.0)) errors.push_back("gap_survival: model.lambda must lie in (0, 1]");
  } else if (cfg.kind == "chern") {
    p.required<std::vector<double>>("energies", detail::nonempty_list());
    p.get<std::size_t>("n_realizations", 1, detail::at_least<std::size_t>(1));
    p.get<int>("twist_grid", 6, detail::at_least(6));
    p.get<double>("mixed_threshold", 0.1, detail::positive());
    const auto window = p.get<std::vector<double>>("gap_window", {});
    if (!window.empty() && (window.size() != 2 || !(window[1] > window[0])))
      p.error("chern.gap_window: expected [lo, hi] with hi > lo");
  } else if (cfg.kind == "mobility_edge") {
    p.get<int>("band", 1, detail::at_least(1));
    p.get<std::vector<double>>("lambdas", {0.4, 0.2, 0.1}, lambda_range(false));
    p.get<std::size_t>("n_realizations", 20, detail::at_least<std::size_t>(1));
    p.get<int>("twist_grid", 6, detail::at_least(6));
    p.get<double>("energy_step", 0.01, detail::positive());
    p.get<double>("mixed_threshold", 0.1, detail::positive());
  } else if (cfg.kind == "dynamics") {
    p.get<double>("p", 2.0, detail::at_least(0.0));
    auto f = p.sub("filter");
    f.required<double>("center");
    f.get<double>("half_width", 0.3, detail::positive());
    f.finish();
    const auto Ts = p.get<std::vector<double>>("T", {50.0, 500.0}, detail::nonempty_list());
    const double t_min = p.get<double>("t_min", 0.1, detail::positive());
    const double tmax_default = Ts.empty() ? 1.0 : 10.0 * *std::max_element(Ts.begin(), Ts.end());
    const double t_max = p.get<double>("t_max", tmax_default, detail::positive());
    if (!(t_max > t_min)) p.error("dynamics.t_max must exceed dynamics.t_min");
    if (!Ts.empty() && t_max < tmax_default) p.error("dynamics.t_max must reach 10 * max(T)");
    p.get<int>("per_decade", 40, detail::at_least(40));
    p.get<std::size_t>("n_realizations", 20, detail::at_least<std::size_t>(1));
    auto r = p.sub("ratio_check");
    if (p.has("ratio_check")) {
      r.required<double>("T_low", detail::positive());
      r.required<double>("T_high", detail::positive());
      const bool has_min = r.has("min");
      const bool has_max = r.has("max");
      if (has_min) r.get<double>("min", 0.0);
      if (has_max) r.get<double>("max", 0.0);
      if (has_min == has_max) r.error("dynamics.ratio_check: give exactly one of min, max");
    }
    r.finish();
    if (spec.L <= 2 * boundary_layer) errors.push_back("dynamics: model.L must exceed " + std::to_string(2 * boundary_layer));
  } else if (cfg.kind == "sample_check") {
    p.get<std::size_t>("n_samples", 100000, detail::at_least<std::size_t>(1));
    p.get<std::vector<double>>("eps", {0.5, 1.0, 2.0, 3.0}, detail::nonempty_positive());
    p.get<std::vector<double>>("betas", {});
    p.get<std::size_t>("sup_trials", 2000, detail::at_least<std::size_t>(1));
    if (!stretched) errors.push_back("sample_check: requires a stretched_exp measure");
  }
  p.finish();
  root.finish();

  if (!errors.empty()) throw ConfigError(errors);
  cfg.resolved = std::move(resolved);
  return cfg;
}

inline ExperimentConfig validate_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path.string() + "'"});
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError({"config file '" + path.string() + "' is not valid JSON: " + e.what()});
  }
  return validate_config_json(doc);
}

// ---------------------------------------------------------------------------
// persistence

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

struct FileEntry {
  std::string name;
  std::size_t bytes = 0;
  std::string sha256;
};

struct RunManifest {
  std::string version = LANDAU_LAB_VERSION;
  std::string kind;
  json resolved_config;
  double wall_time_seconds = 0.0;
  std::vector<Verdict> verdicts;
  std::vector<std::string> errors;
  std::vector<FileEntry> files;
  json summary = json::object();  // key numbers for the report

  bool passed() const {
    return errors.empty() &&
           std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  }

  json to_json() const {
    json j;
    j["artifact_version"] = version;
    j["experiment"] = kind;
    j["resolved_config"] = resolved_config;
    j["wall_time_seconds"] = wall_time_seconds;
    j["verdicts"] = verdicts;
    j["errors"] = errors;
    j["summary"] = summary;
    j["passed"] = passed();
    j["files"] = json::array();
    for (const auto& f : files) j["files"].push_back({{"name", f.name}, {"bytes", f.bytes}, {"sha256", f.sha256}});
    return j;
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.version = j.value("artifact_version", "");
    m.kind = j.value("experiment", "");
    m.resolved_config = j.value("resolved_config", json::object());
    m.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    if (j.contains("verdicts")) m.verdicts = j.at("verdicts").get<std::vector<Verdict>>();
    if (j.contains("errors")) m.errors = j.at("errors").get<std::vector<std::string>>();
    m.summary = j.value("summary", json::object());
    if (j.contains("files"))
      for (const auto& f : j.at("files"))
        m.files.push_back({f.at("name").get<std::string>(), f.at("bytes").get<std::size_t>(),
                           f.at("sha256").get<std::string>()});
    return m;
  }
};

/// Files are staged in a hidden directory and renamed into place only when
/// the run completes; the manifest is promoted last.
class OutputStage {
 public:
  explicit OutputStage(std::filesystem::path out) : out_(std::move(out)), stage_(out_ / ".staging") {
    std::filesystem::create_directories(out_);
    std::filesystem::remove_all(stage_);
    std::filesystem::create_directories(stage_);
  }
  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;
  ~OutputStage() {
    std::error_code ec;
    std::filesystem::remove_all(stage_, ec);
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(stage_ / name, std::ios::binary);
    f << content;
    if (!f) throw NumericalError("cannot write " + (stage_ / name).string());
    files_.push_back({name, content.size(), sha256_hex(content)});
  }

  const std::vector<FileEntry>& files() const noexcept { return files_; }

  void promote(const std::string& manifest_content) {
    for (const auto& f : files_) std::filesystem::rename(stage_ / f.name, out_ / f.name);
    {
      std::ofstream m(stage_ / "manifest.json", std::ios::binary);
      m << manifest_content;
    }
    std::filesystem::rename(stage_ / "manifest.json", out_ / "manifest.json");
  }

 private:
  std::filesystem::path out_;
  std::filesystem::path stage_;
  std::vector<FileEntry> files_;
};

// ---------------------------------------------------------------------------
// experiments

namespace detail {

struct RunContext {
  const ExperimentConfig& cfg;
  OutputStage& out;
  RunManifest& manifest;
  std::size_t workers;

  template <class F>
  void csv(const std::string& name, F&& writer) {
    std::ostringstream os;
    writer(os);
    out.write(name, os.str());
  }
  void json_file(const std::string& name, const json& j) { out.write(name, j.dump(2) + "\n"); }
  void verdict(Verdict v) { manifest.verdicts.push_back(std::move(v)); }
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

inline void run_spectrum(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  const auto& spec = ctx.cfg.spec;
  const Twist tw{p["theta1"].get<double>(), p["theta2"].get<double>()};
  const auto boundary = p["boundary"] == "open" ? Boundary::open : Boundary::periodic;
  const auto seed = derive_seed(ctx.cfg.seed, experiment_id("spectrum"), 0);
  const auto h = spec.lambda == 0.0 ? build_clean_hamiltonian(spec, tw, boundary)
                                    : build_random_hamiltonian(spec, draw_disorder(spec, ctx.cfg.measure, seed), tw, boundary);
  const auto s = full_spectrum(h);
  ctx.csv("spectrum.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.header({"index", "eigenvalue"});
    for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) csv.row(i, s.eigenvalues[i]);
  });
  const auto bands = cluster_bands(s.eigenvalues, p["band_threshold"].get<double>());
  ctx.csv("bands.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.header({"band", "lo", "hi", "count", "centroid"});
    for (std::size_t i = 0; i < bands.size(); ++i) csv.row(i + 1, bands[i].lo, bands[i].hi, bands[i].count, bands[i].centroid);
  });
  const auto [glo, ghi] = h.gershgorin_bounds();
  ctx.verdict({"spectrum inside the Gershgorin enclosure",
               s.eigenvalues.front() >= glo - 1e-9 && s.eigenvalues.back() <= ghi + 1e-9, s.eigenvalues.back(), ghi,
               "[" + brief(s.eigenvalues.front()) + ", " + brief(s.eigenvalues.back()) + "] within [" + brief(glo) +
                   ", " + brief(ghi) + "]"});
  ctx.manifest.summary["n_bands"] = bands.size();
  ctx.manifest.summary["disorder_seed"] = spec.lambda == 0.0 ? json(nullptr) : json(seed);
}

inline void run_ids(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  const auto energies = linspace(p["e_min"], p["e_max"], p["n_energies"]);
  const auto curve =
      ids_estimate(ctx.cfg.spec, ctx.cfg.measure, energies, p["n_realizations"], ctx.cfg.seed, ctx.workers);
  ctx.csv("ids.csv", [&](std::ostream& os) { curve.write_csv(os); });
  const bool monotone = std::is_sorted(curve.mean.begin(), curve.mean.end());
  ctx.verdict({"IDS nondecreasing in E", monotone, 0.0, 0.0, ""});
  ctx.verdict({"IDS within [0, 1]", curve.mean.front() >= 0.0 && curve.mean.back() <= 1.0, curve.mean.back(), 1.0, ""});
  const auto deltas = p["hoelder_deltas"].get<std::vector<double>>();
  if (deltas.size() >= 2) {
    const auto fit = hoelder_fit(curve, deltas);
    ctx.manifest.summary["hoelder_exponent"] = fit.exponent;
    ctx.manifest.summary["hoelder_r_squared"] = fit.r_squared;
  }
}

inline void run_wegner(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  WegnerScanConfig wc;
  wc.regime = parse_regime(p["regime"]);
  for (const auto& iv : p["intervals"]) wc.deltas.push_back({iv["center"].get<double>(), iv["width"].get<double>()});
  wc.sizes = p["sizes"].get<std::vector<int>>();
  wc.lambdas = p["lambdas"].get<std::vector<double>>();
  wc.n_realizations = p["n_realizations"];
  wc.base_seed = ctx.cfg.seed;
  wc.q_orders = p["q_orders"].get<std::vector<double>>();
  wc.workers = ctx.workers;
  wc.linearity_tolerance = p["linearity_tolerance"];
  const auto report = wegner_scan(ctx.cfg.spec, std::get<StretchedExpMeasure>(ctx.cfg.measure), wc);
  ctx.csv("wegner.csv", [&](std::ostream& os) { report.write_csv(os); });
  ctx.json_file("wegner.json", report.to_json());
  for (const auto& v : report.verdicts) ctx.verdict(v);
  for (const auto& [q, per] : report.k_w)
    for (const auto& [l, k] : per) ctx.manifest.summary["K_W"].push_back({{"q", q}, {"lambda", l}, {"value", k}});
}

inline void run_spectral_averaging(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  SpectralAveragingConfig sc;
  sc.dimension = p["dimension"];
  sc.n_trials = p["n_trials"];
  sc.background_lambda = p["background_lambda"];
  sc.seed = ctx.cfg.seed;
  sc.nu = ctx.cfg.measure;
  sc.workers = ctx.workers;
  const auto trials = spectral_averaging_check(sc);
  ctx.csv("spectral_averaging.csv", [&](std::ostream& os) { write_spectral_averaging_csv(os, trials); });
  std::size_t violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& t : trials) {
    violations += t.pass ? 0 : 1;
    worst = std::max(worst, t.lhs - t.rhs);
  }
  ctx.verdict({"LHS <= Q_nu(|I|) within 3 error bars on every trial", violations == 0, static_cast<double>(violations),
               0.0, "max(LHS - RHS) = " + brief(worst)});
}

inline void run_gap_survival(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  const auto g = gap_survival_probability(ctx.cfg.spec, std::get<StretchedExpMeasure>(ctx.cfg.measure), p["eps"],
                                          p["n_realizations"], ctx.cfg.seed, ctx.workers);
  ctx.csv("gap_survival.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.header({"eps", "estimate", "stderr", "exact", "z_score", "trials", "conditioned", "weyl_violations",
                "worst_shift_ratio"});
    csv.row(p["eps"].get<double>(), g.probability.estimate, g.probability.stderr_, g.probability.exact,
            g.probability.z_score(), g.probability.trials, g.conditioned, g.weyl_violations, g.worst_shift_ratio);
  });
  ctx.verdict({"Monte-Carlo survival probability within 3 sigma of the product formula", g.probability.matches_exact(),
               g.probability.z_score(), 3.0,
               "estimate " + brief(g.probability.estimate) + " vs exact " + brief(g.probability.exact)});
  ctx.verdict({"conditioned spectra stay within lambda*eps of the clean levels", g.weyl_violations == 0,
               g.worst_shift_ratio, 1.0, std::to_string(g.conditioned) + " conditioned realizations"});
}

inline void run_chern(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  HallScanConfig hc;
  hc.twist_grid_n = p["twist_grid"];
  hc.workers = ctx.workers;
  hc.mixed_threshold = p["mixed_threshold"];
  const auto window = p["gap_window"].get<std::vector<double>>();
  hc.keep_states = !window.empty();
  auto energies = p["energies"].get<std::vector<double>>();
  std::sort(energies.begin(), energies.end());
  const auto curve = hall_plateau_scan(ctx.cfg.spec, ctx.cfg.measure, energies, p["n_realizations"], ctx.cfg.seed, hc);
  ctx.csv("hall.csv", [&](std::ostream& os) { curve.write_csv(os); });
  if (!window.empty()) {
    // states that moved into a clean gap, counted per realization at zero twist
    const double volume = static_cast<double>(ctx.cfg.spec.sites());
    Accumulator acc;
    ctx.csv("gap_states.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      csv.header({"realization", "states_in_window", "ids_increment"});
      for (std::size_t r = 0; r < curve.states.size(); ++r) {
        const auto& lv = curve.states[r].levels;
        const auto n = static_cast<std::size_t>(std::count_if(
            lv.begin(), lv.end(), [&](double e) { return e > window[0] && e <= window[1]; }));
        acc.add(static_cast<double>(n) / volume);
        csv.row(r, n, static_cast<double>(n) / volume);
      }
    });
    const double z = acc.stderr_mean() > 0.0 ? acc.mean() / acc.stderr_mean()
                                             : (acc.mean() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    ctx.verdict({"IDS increment across the gap window more than 3 sigma above 0", z > 3.0, z, 3.0,
                 "mean " + brief(acc.mean()) + " +- " + brief(acc.stderr_mean()) + " per site over [" +
                     brief(window[0]) + ", " + brief(window[1]) + "]"});
    for (const auto& pt : curve.points)
      if (pt.energy > window[0] && pt.energy <= window[1])
        ctx.verdict({"Chern integer-pure at E_F = " + brief(pt.energy), pt.n_ok > 0 && pt.minority_fraction() < hc.mixed_threshold,
                     pt.minority_fraction(), hc.mixed_threshold, "histogram " + pt.histogram_string()});
    ctx.manifest.summary["gap_ids_increment"] = acc.mean();
  }
  json j;
  for (const auto& pl : curve.plateaus) j["plateaus"].push_back({{"e_lo", pl.e_lo}, {"e_hi", pl.e_hi}, {"value", pl.value}});
  j["jumps"] = curve.jumps;
  j["mixed_threshold"] = curve.mixed_threshold;
  j["caveat"] = lattice_caveat();
  ctx.json_file("chern.json", j);
  std::size_t empty = 0;
  for (const auto& pt : curve.points) empty += pt.n_ok == 0 ? 1 : 0;
  ctx.verdict({"every Fermi energy has at least one gapped evaluation", empty == 0, static_cast<double>(empty), 0.0,
               "energies with all realizations failing"});
  ctx.manifest.summary["caveat"] = lattice_caveat();
}

inline void run_mobility_edge(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  MobilityScanConfig mc;
  mc.twist_grid_n = p["twist_grid"];
  mc.energy_step = p["energy_step"];
  mc.mixed_threshold = p["mixed_threshold"];
  mc.workers = ctx.workers;
  std::vector<HallCurve> curves;
  const auto edges = mobility_edge_scan(ctx.cfg.spec, ctx.cfg.measure, p["band"], p["lambdas"].get<std::vector<double>>(),
                                        p["n_realizations"], ctx.cfg.seed, mc, &curves);
  ctx.csv("mobility.csv", [&](std::ostream& os) { write_mobility_csv(os, edges); });
  ctx.csv("hall.csv", [&](std::ostream& os) {
    for (std::size_t i = 0; i < curves.size(); ++i) curves[i].write_csv(os, i == 0);
  });
  auto by_lambda = edges;
  std::sort(by_lambda.begin(), by_lambda.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
  if (by_lambda.size() >= 2) {
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < by_lambda.size(); ++i)
      monotone = monotone && by_lambda[i].width() < by_lambda[i + 1].width();
    std::string detail;
    for (const auto& e : by_lambda) detail += "w(" + brief(e.lambda) + ")=" + brief(e.width()) + " ";
    ctx.verdict({"mixed-Chern window shrinks monotonically as lambda decreases", monotone, by_lambda.front().width(),
                 by_lambda.back().width(), detail});
  }
  if (!by_lambda.empty()) {
    const auto& e = by_lambda.front();
    const double off = std::abs(e.center() - e.band_center);
    ctx.verdict({"window centre within one grid cell of the clean band centre at the smallest lambda",
                 off <= mc.energy_step * (1.0 + 1e-9), off, mc.energy_step,
                 "centre " + brief(e.center()) + " vs " + brief(e.band_center)});
  }
  ctx.manifest.summary["caveat"] = lattice_caveat();
}

inline void run_dynamics(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  const EnergyFilter filter(p["filter"]["center"].get<double>(), p["filter"]["half_width"].get<double>());
  const auto t_grid = log_time_grid(p["t_min"], p["t_max"], p["per_decade"]);
  MomentConfig mc;
  mc.p = p["p"];
  mc.n_realizations = p["n_realizations"];
  mc.seed = ctx.cfg.seed;
  mc.workers = ctx.workers;
  const auto Ts = p["T"].get<std::vector<double>>();
  const auto rec = time_averaged_moment(moment(ctx.cfg.spec, ctx.cfg.measure, filter, t_grid, mc), Ts);
  ctx.csv("moment.csv", [&](std::ostream& os) { rec.write_moment_csv(os); });
  ctx.csv("tam.csv", [&](std::ostream& os) { rec.write_tam_csv(os); });
  ctx.json_file("dynamics.json", rec.to_json());
  ctx.verdict({"boundary leakage below tolerance at every time", rec.max_leakage < leakage_tolerance, rec.max_leakage,
               leakage_tolerance, ""});
  if (p.contains("ratio_check") && !p["ratio_check"].empty()) {
    const auto& rc = p["ratio_check"];
    auto tam_at = [&](double T) {
      for (std::size_t i = 0; i < rec.T_grid.size(); ++i)
        if (rec.T_grid[i] == T) return rec.tam_mean[i];
      throw SpecError("dynamics.ratio_check: T = " + brief(T) + " is not in the T grid");
    };
    const double ratio = tam_at(rc["T_high"]) / tam_at(rc["T_low"]);
    if (rc.contains("min"))
      ctx.verdict({"time-averaged moment ratio >= " + brief(rc["min"]), ratio >= rc["min"].get<double>(), ratio,
                   rc["min"], ""});
    else
      ctx.verdict({"time-averaged moment ratio <= " + brief(rc["max"]), ratio <= rc["max"].get<double>(), ratio,
                   rc["max"], ""});
  }
}

inline void run_sample_check(RunContext& ctx) {
  const auto& p = ctx.cfg.params();
  const auto& mu = std::get<StretchedExpMeasure>(ctx.cfg.measure);
  const std::size_t n = p["n_samples"];
  const auto samples = mu.sample(derive_seed(ctx.cfg.seed, experiment_id("sample_check"), 0), n);
  ctx.csv("sample_check.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.header({"eps", "estimate", "stderr", "exact", "z_score"});
    for (double eps : p["eps"].get<std::vector<double>>()) {
      const auto hits = static_cast<std::size_t>(
          std::count_if(samples.begin(), samples.end(), [eps](double w) { return std::abs(w) > eps; }));
      const auto est = ProbabilityEstimate::from_counts(hits, n, mu.tail(eps));
      csv.row(eps, est.estimate, est.stderr_, est.exact, est.z_score());
      ctx.verdict({"P(|omega| > " + brief(eps) + ") matches the exact tail within 3 sigma", est.matches_exact(),
                   est.z_score(), 3.0, "estimate " + brief(est.estimate) + " vs " + brief(est.exact)});
    }
  });
  const auto betas = p["betas"].get<std::vector<double>>();
  if (!betas.empty()) {
    ctx.csv("sup_bound.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      csv.header({"L", "beta", "threshold", "estimate", "stderr", "exact", "z_score"});
      for (std::size_t i = 0; i < betas.size(); ++i) {
        const auto b = sup_norm_bound_experiment(ctx.cfg.spec, ctx.cfg.measure, betas[i], p["sup_trials"],
                                                 derive_seed(ctx.cfg.seed, experiment_id("sup_bound"), i));
        csv.row(ctx.cfg.spec.L, betas[i], b.threshold, b.probability.estimate, b.probability.stderr_, b.probability.exact,
                b.probability.z_score());
        ctx.verdict({"P(max|omega_j| <= (log L)^" + brief(betas[i]) + ") matches the product formula within 3 sigma",
                     b.probability.matches_exact(), b.probability.z_score(), 3.0, ""});
      }
    });
  }
}

}  // namespace detail

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> output_dir;
};

/// Runs one validated experiment and promotes its outputs. Component
/// errors are recorded in the manifest (with experiment and seed) rather
/// than thrown.
inline RunManifest run_experiment(ExperimentConfig cfg, const RunOptions& opt = {}) {
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.resolved["seed"] = *opt.seed;
  }
  if (opt.workers) {
    if (*opt.workers == 0) throw ConfigError({"workers must be >= 1"});
    cfg.workers = *opt.workers;
    cfg.resolved["workers"] = *opt.workers;
  }
  if (opt.output_dir) {
    cfg.output_dir = *opt.output_dir;
    cfg.resolved["output_dir"] = *opt.output_dir;
  }
  RunManifest manifest;
  manifest.kind = cfg.kind;
  // the worker count never changes results, so it stays out of the echoed config
  json echoed = cfg.resolved;
  echoed.erase("workers");
  manifest.resolved_config = cfg.resolved;

  OutputStage stage(cfg.output_dir);
  stage.write("resolved_config.json", echoed.dump(2) + "\n");
  detail::RunContext ctx{cfg, stage, manifest, cfg.workers};
  const auto start = std::chrono::steady_clock::now();
  try {
    static const std::map<std::string, std::function<void(detail::RunContext&)>> runners{
        {"spectrum", detail::run_spectrum},
        {"ids", detail::run_ids},
        {"wegner", detail::run_wegner},
        {"spectral_averaging", detail::run_spectral_averaging},
        {"gap_survival", detail::run_gap_survival},
        {"chern", detail::run_chern},
        {"mobility_edge", detail::run_mobility_edge},
        {"dynamics", detail::run_dynamics},
        {"sample_check", detail::run_sample_check}};
    runners.at(cfg.kind)(ctx);
  } catch (const BoundaryLeakError& e) {
    manifest.errors.push_back("experiment " + cfg.kind + ", base seed " + std::to_string(cfg.seed) + ": " + e.what());
    manifest.summary["max_admissible_time"] = e.max_admissible_time();
  } catch (const std::exception& e) {
    manifest.errors.push_back("experiment " + cfg.kind + ", base seed " + std::to_string(cfg.seed) + ": " + e.what());
  }
  manifest.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest.files = stage.files();
  stage.promote(manifest.to_json().dump(2) + "\n");
  return manifest;
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot read manifest '" + path.string() + "'");
  try {
    return RunManifest::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw SpecError("manifest '" + path.string() + "' is malformed: " + e.what());
  }
}

/// Plain-text summary of a manifest; checks the file inventory but never
/// recomputes results.
inline std::string emit_report(const std::filesystem::path& manifest_path) {
  const auto m = load_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  std::vector<std::string> missing;
  for (const auto& f : m.files)
    if (!std::filesystem::exists(dir / f.name)) missing.push_back(f.name);
  if (!missing.empty()) {
    std::string s = "missing files listed in the manifest inventory:";
    for (const auto& f : missing) s += " " + f;
    throw SpecError(s);
  }
  std::ostringstream os;
  os << "experiment : " << (m.kind.empty() ? "?" : m.kind) << "\n";
  os << "version    : " << m.version << "\n";
  os << "wall time  : " << std::fixed << std::setprecision(2) << m.wall_time_seconds << " s\n";
  os.unsetf(std::ios::floatfield);
  if (m.verdicts.empty()) {
    os << "no verdicts\n";
  } else {
    for (const auto& v : m.verdicts) {
      os << (v.pass ? "PASS" : "FAIL") << "  " << v.claim << "  [measured " << brief(v.measured) << ", threshold "
         << brief(v.threshold) << "]";
      if (!v.detail.empty()) os << "  " << v.detail;
      os << "\n";
    }
  }
  for (const auto& e : m.errors) os << "ERROR " << e << "\n";
  if (!m.summary.empty())
    for (const auto& [k, v] : m.summary.items()) os << "  " << k << " = " << v.dump() << "\n";
  os << "files      : " << m.files.size() << "\n";
  os << "overall    : " << (m.passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace landau
