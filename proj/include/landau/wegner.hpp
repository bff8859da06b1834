#pragma once

// Monte-Carlo checks of Wegner-type bounds on E{tr E_H(Delta)}, the
// spectral-averaging inequality, the single-site trace bound and the
// probability that the Landau gaps survive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "landau/common.hpp"
#include "landau/csv.hpp"
#include "landau/measures.hpp"
#include "landau/model.hpp"
#include "landau/parallel.hpp"
#include "landau/rng.hpp"
#include "landau/spectral.hpp"
#include "landau/stats.hpp"
#include "landau/verdict.hpp"

namespace landau {

enum class WegnerRegime { general, hoelder_ids, spectral_gap };

inline std::string to_string(WegnerRegime r) {
  switch (r) {
    case WegnerRegime::general: return "general";
    case WegnerRegime::hoelder_ids: return "hoelder_ids";
    case WegnerRegime::spectral_gap: return "spectral_gap";
  }
  return "?";
}

inline WegnerRegime parse_regime(const std::string& s) {
  if (s == "general" || s == "a") return WegnerRegime::general;
  if (s == "hoelder_ids" || s == "b") return WegnerRegime::hoelder_ids;
  if (s == "spectral_gap" || s == "c") return WegnerRegime::spectral_gap;
  throw SpecError("unknown Wegner regime '" + s + "'");
}

struct EnergyInterval {
  double center = 0.0;
  double width = 0.0;
  double lo() const noexcept { return center - 0.5 * width; }
  double hi() const noexcept { return center + 0.5 * width; }
};

struct WegnerCell {
  int L = 0;
  EnergyInterval delta;
  double lambda = 0.0;
  double mean_trace = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
  double max_trace = 0.0;
};

struct WegnerScanConfig {
  WegnerRegime regime = WegnerRegime::general;
  std::vector<EnergyInterval> deltas;
  std::vector<int> sizes;
  std::vector<double> lambdas;          // empty: use spec.lambda
  std::size_t n_realizations = 200;
  std::uint64_t base_seed = 0;
  std::vector<double> q_orders{4.0, 2.0};  // first entry drives the verdicts
  std::size_t workers = 1;
  double linearity_tolerance = 0.15;
  double halving_lo = 0.35;
  double halving_hi = 0.65;
  double lambda_factor = 2.0;
};

struct WegnerReport {
  WegnerRegime regime = WegnerRegime::general;
  ModelSpec spec;
  std::vector<EnergyInterval> deltas;
  std::vector<int> sizes;
  std::vector<double> lambdas;
  std::vector<double> q_orders;
  std::vector<WegnerCell> cells;
  /// fitted K_W per (q, lambda): smallest constant with mean <= K * [lambda] * Q * L^2
  std::map<double, std::map<double, double>> k_w;
  std::optional<PowerLawFit> width_exponent;
  std::vector<Verdict> verdicts;

  bool passed() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  }

  const WegnerCell* find(int L, std::size_t delta_index, double lambda) const {
    for (const auto& c : cells)
      if (c.L == L && c.lambda == lambda && c.delta.center == deltas[delta_index].center &&
          c.delta.width == deltas[delta_index].width)
        return &c;
    return nullptr;
  }

  void write_csv(std::ostream& os) const {
    CsvWriter csv(os);
    csv.header({"L", "delta_center", "delta_width", "lambda", "mean_trace", "stderr", "n"});
    for (const auto& c : cells) csv.row(c.L, c.delta.center, c.delta.width, c.lambda, c.mean_trace, c.stderr_, c.n);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["regime"] = to_string(regime);
    j["flux"] = {spec.flux_p, spec.flux_q};
    j["alpha"] = spec.alpha;
    j["sizes"] = sizes;
    j["lambdas"] = lambdas;
    j["q_orders"] = q_orders;
    for (const auto& d : deltas) j["deltas"].push_back({{"center", d.center}, {"width", d.width}});
    for (const auto& c : cells)
      j["cells"].push_back({{"L", c.L},
                            {"delta_center", c.delta.center},
                            {"delta_width", c.delta.width},
                            {"lambda", c.lambda},
                            {"mean_trace", c.mean_trace},
                            {"stderr", c.stderr_},
                            {"n", c.n},
                            {"max_trace", c.max_trace}});
    for (const auto& [q, per_lambda] : k_w)
      for (const auto& [lambda, k] : per_lambda) j["k_w"].push_back({{"q", q}, {"lambda", lambda}, {"k_w", k}});
    if (width_exponent)
      j["width_exponent"] = {{"exponent", width_exponent->exponent}, {"r_squared", width_exponent->r_squared}};
    j["verdicts"] = verdicts;
    return j;
  }
};

/// Allowed energy region for a regime, derived from the clean bands:
/// lowest band plus half of the first gap (general / hoelder_ids), or the
/// open first gap (spectral_gap). Also returns the "small |Delta|" cap:
/// a tenth of the band width or of the gap.
struct RegimeWindow {
  double lo = 0.0;
  double hi = 0.0;
  double max_width = 0.0;
};

inline RegimeWindow regime_window(const ModelSpec& spec, WegnerRegime regime) {
  const auto bands = clean_band_structure(spec, twist_samples_for(spec));
  if (bands.size() < 2) throw SpecError("Wegner scan needs a clean spectral gap (flux with q >= 2)");
  const double gap_lo = bands[0].hi;
  const double gap_hi = bands[1].lo;
  if (regime == WegnerRegime::spectral_gap) return {gap_lo, gap_hi, 0.1 * (gap_hi - gap_lo)};
  return {bands[0].lo - 0.5 * (gap_hi - gap_lo), 0.5 * (gap_lo + gap_hi), 0.1 * (bands[0].hi - bands[0].lo)};
}

inline WegnerReport wegner_scan(const ModelSpec& spec, const StretchedExpMeasure& mu, const WegnerScanConfig& cfg) {
  spec.validate();
  if (cfg.deltas.empty() || cfg.sizes.empty()) throw SpecError("wegner_scan: empty interval or size grid");
  if (cfg.n_realizations < 30) throw SpecError("wegner_scan: need at least 30 realizations per cell");
  if (cfg.q_orders.empty()) throw SpecError("wegner_scan: need at least one q order");
  std::vector<double> lambdas = cfg.lambdas.empty() ? std::vector<double>{spec.lambda} : cfg.lambdas;
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw SpecError("wegner_scan: lambda must lie in [0, 1]");
    if (l == 0.0 && cfg.regime != WegnerRegime::spectral_gap)
      throw SpecError("wegner_scan: lambda = 0 only meaningful in the spectral_gap regime");
  }
  for (int L : cfg.sizes) {
    ModelSpec s = spec;
    s.L = L;
    s.validate();
  }
  ModelSpec window_spec = spec;
  window_spec.L = cfg.sizes.front();
  const auto window = regime_window(window_spec, cfg.regime);
  for (const auto& d : cfg.deltas) {
    if (!(d.width > 0.0)) throw SpecError("wegner_scan: interval widths must be positive");
    if (d.lo() < window.lo || d.hi() > window.hi)
      throw SpecError("wegner_scan: interval [" + std::to_string(d.lo()) + ", " + std::to_string(d.hi()) +
                      "] escapes the " + to_string(cfg.regime) + " energy region [" + std::to_string(window.lo) +
                      ", " + std::to_string(window.hi) + "]");
    if (d.width > window.max_width * (1.0 + 1e-12))
      throw SpecError("wegner_scan: |Delta| = " + std::to_string(d.width) + " exceeds the small-interval cap " +
                      std::to_string(window.max_width));
  }

  WegnerReport report;
  report.regime = cfg.regime;
  report.spec = spec;
  report.deltas = cfg.deltas;
  report.sizes = cfg.sizes;
  report.lambdas = lambdas;
  report.q_orders = cfg.q_orders;

  // distinct endpoints: each needs one inertia count per realization
  std::vector<double> endpoints;
  for (const auto& d : cfg.deltas) {
    endpoints.push_back(d.lo());
    endpoints.push_back(d.hi());
  }
  std::sort(endpoints.begin(), endpoints.end());
  endpoints.erase(std::unique(endpoints.begin(), endpoints.end()), endpoints.end());
  auto endpoint_index = [&](double e) {
    return static_cast<std::size_t>(std::lower_bound(endpoints.begin(), endpoints.end(), e) - endpoints.begin());
  };

  for (int L : cfg.sizes) {
    ModelSpec s = spec;
    s.L = L;
    const auto exp_id = experiment_id("wegner") ^ static_cast<std::uint64_t>(L);
    // traces[realization][lambda][delta]
    auto traces = parallel_map(cfg.n_realizations, cfg.workers, [&](std::size_t r) {
      const auto d = draw_disorder(s, Measure{mu}, derive_seed(cfg.base_seed, exp_id, r));
      std::vector<std::vector<double>> out(lambdas.size(), std::vector<double>(cfg.deltas.size()));
      for (std::size_t li = 0; li < lambdas.size(); ++li) {
        ModelSpec sl = s;
        sl.lambda = lambdas[li];
        const InertiaCounter counter(build_random_hamiltonian(sl, d));
        std::vector<std::size_t> below(endpoints.size());
        for (std::size_t e = 0; e < endpoints.size(); ++e) below[e] = counter.count_at_or_below(endpoints[e]);
        for (std::size_t k = 0; k < cfg.deltas.size(); ++k)
          out[li][k] = static_cast<double>(below[endpoint_index(cfg.deltas[k].hi())] -
                                           below[endpoint_index(cfg.deltas[k].lo())]);
      }
      return out;
    });
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      for (std::size_t k = 0; k < cfg.deltas.size(); ++k) {
        Accumulator acc;
        double mx = 0.0;
        for (const auto& t : traces) {
          acc.add(t[li][k]);
          mx = std::max(mx, t[li][k]);
        }
        report.cells.push_back({L, cfg.deltas[k], lambdas[li], acc.mean(), acc.stderr_mean(), acc.count(), mx});
      }
    }
  }

  // K_W fits: the explicit lambda factor only enters in the gap regime
  const bool lambda_factor = cfg.regime == WegnerRegime::spectral_gap;
  for (double q : cfg.q_orders) {
    for (double lambda : lambdas) {
      if (lambda == 0.0) continue;
      double k = 0.0;
      for (const auto& c : report.cells) {
        if (c.lambda != lambda) continue;
        const double scale = modified_concentration(mu, q, c.delta.width) * static_cast<double>(c.L) * c.L *
                             (lambda_factor ? lambda : 1.0);
        k = std::max(k, c.mean_trace / scale);
      }
      report.k_w[q][lambda] = k;
    }
  }

  const double q0 = cfg.q_orders.front();
  auto cell = [&](int L, const EnergyInterval& d, double lambda) -> const WegnerCell& {
    for (const auto& c : report.cells)
      if (c.L == L && c.lambda == lambda && c.delta.center == d.center && c.delta.width == d.width) return c;
    throw std::logic_error("missing Wegner cell");
  };

  for (double lambda : lambdas) {
    if (lambda == 0.0) {
      double worst = 0.0;
      for (const auto& c : report.cells)
        if (c.lambda == 0.0) worst = std::max(worst, c.max_trace);
      report.verdicts.push_back({"clean gap holds no eigenvalue on any realization (lambda = 0)", worst == 0.0, worst,
                                 0.0, "max tr E(Delta) over all cells and realizations"});
      continue;
    }
    // (i) linear growth in |Lambda| = L^2
    if (cfg.sizes.size() > 1) {
      for (const auto& d : cfg.deltas) {
        Accumulator per_site;
        std::vector<double> densities;
        for (int L : cfg.sizes) {
          const auto& c = cell(L, d, lambda);
          densities.push_back(c.mean_trace / (static_cast<double>(L) * L));
        }
        double mean = 0.0;
        for (double x : densities) mean += x;
        mean /= static_cast<double>(densities.size());
        double dev = 0.0;
        std::size_t worst_i = 0;
        for (std::size_t i = 0; i < densities.size(); ++i) {
          const double rel = mean > 0.0 ? std::abs(densities[i] - mean) / mean : 0.0;
          if (rel > dev) {
            dev = rel;
            worst_i = i;
          }
        }
        const bool applies = cfg.regime != WegnerRegime::spectral_gap;
        report.verdicts.push_back({"E tr E(Delta) / L^2 constant across L (lambda=" + brief(lambda) + ")",
                                   !applies || dev <= cfg.linearity_tolerance, dev, cfg.linearity_tolerance,
                                   "cell L=" + std::to_string(cfg.sizes[worst_i]) + ", Delta=[" +
                                       brief(d.lo()) + ", " + brief(d.hi()) + "]" +
                                       (applies ? "" : " (informational in the gap regime)")});
      }
    }
    // halving |Delta| around the same centre
    if (cfg.regime != WegnerRegime::spectral_gap) {
      for (const auto& big : cfg.deltas) {
        for (const auto& small : cfg.deltas) {
          if (small.center != big.center || std::abs(small.width * 2.0 - big.width) > 1e-12 * big.width) continue;
          for (int L : cfg.sizes) {
            const auto& cb = cell(L, big, lambda);
            const auto& cs = cell(L, small, lambda);
            const double ratio = cb.mean_trace > 0.0 ? cs.mean_trace / cb.mean_trace : 0.0;
            report.verdicts.push_back({"halving |Delta| scales E tr E(Delta) into [" + brief(cfg.halving_lo) +
                                           ", " + brief(cfg.halving_hi) + "]",
                                       ratio >= cfg.halving_lo && ratio <= cfg.halving_hi, ratio, cfg.halving_hi,
                                       "L=" + std::to_string(L) + ", width " + brief(big.width) + " -> " +
                                           brief(small.width)});
          }
        }
      }
    }
    // (ii) a single K_W fitted at the largest L dominates every other cell
    {
      const int Lmax = *std::max_element(cfg.sizes.begin(), cfg.sizes.end());
      double k = 0.0;
      for (const auto& c : report.cells)
        if (c.lambda == lambda && c.L == Lmax)
          k = std::max(k, c.mean_trace / (modified_concentration(mu, q0, c.delta.width) * Lmax * Lmax *
                                          (lambda_factor ? lambda : 1.0)));
      double worst = 0.0;
      std::string where = "all cells";
      bool ok = true;
      for (const auto& c : report.cells) {
        if (c.lambda != lambda) continue;
        const double bound = k * modified_concentration(mu, q0, c.delta.width) * c.L * c.L *
                             (lambda_factor ? lambda : 1.0);
        const double allowed = bound * (1.0 + cfg.linearity_tolerance) + 3.0 * c.stderr_;
        const double excess = c.mean_trace - allowed;
        if (excess > worst) {
          worst = excess;
          where = "L=" + std::to_string(c.L) + ", width " + brief(c.delta.width);
        }
        ok = ok && excess <= 0.0;
      }
      report.verdicts.push_back({"E tr E(Delta) <= K_W " + std::string(lambda_factor ? "lambda " : "") +
                                     "Q_mu^(q)(|Delta|) L^2 with one K_W (q=" + brief(q0) +
                                     ", lambda=" + brief(lambda) + ")",
                                 ok, worst, 0.0, "K_W=" + brief(k) + "; worst excess at " + where});
    }
  }

  // (iii) stability of K_W across lambda in the gap regime
  if (lambda_factor) {
    std::vector<double> ks;
    std::vector<double> ls;
    for (const auto& [lambda, k] : report.k_w[q0]) {
      ls.push_back(lambda);
      ks.push_back(k);
    }
    if (ks.size() >= 2) {
      const double kmin = *std::min_element(ks.begin(), ks.end());
      const double kmax = *std::max_element(ks.begin(), ks.end());
      const double ratio = kmin > 0.0 ? kmax / kmin : std::numeric_limits<double>::infinity();
      std::string detail;
      for (std::size_t i = 0; i < ks.size(); ++i)
        detail += (i ? ", " : "") + std::string("K_W(") + brief(ls[i]) + ")=" + brief(ks[i]);
      report.verdicts.push_back({"K_W stable across lambda within a factor " + brief(cfg.lambda_factor),
                                 ratio <= cfg.lambda_factor, ratio, cfg.lambda_factor, detail});
    }
  }

  // growth exponent of E tr E(Delta) in |Delta|, reported in the Hoelder regime
  if (cfg.regime == WegnerRegime::hoelder_ids) {
    const int Lmax = *std::max_element(cfg.sizes.begin(), cfg.sizes.end());
    std::vector<double> widths;
    std::vector<double> means;
    for (const auto& c : report.cells)
      if (c.L == Lmax && c.lambda == lambdas.front()) {
        widths.push_back(c.delta.width);
        means.push_back(c.mean_trace);
      }
    report.width_exponent = fit_power_law(widths, means);
    report.verdicts.push_back({"E tr E(Delta) <= K_W |Delta|^zeta L^2 with fitted zeta > 0",
                               report.width_exponent->exponent > 0.0, report.width_exponent->exponent, 0.0,
                               "r^2=" + brief(report.width_exponent->r_squared)});
  }
  return report;
}

// ---------------------------------------------------------------------------
// spectral averaging

struct SpectralAveragingTrial {
  Eigen::MatrixXcd h0;
  Eigen::MatrixXcd w;     // positive semidefinite
  Eigen::VectorXcd phi;   // unit norm
  EnergyInterval interval;
  double w_norm = 0.0;
  double lhs = 0.0;
  double lhs_error = 0.0;
  double rhs = 0.0;
  std::size_t pieces = 0;
  bool pass = false;
};

namespace detail {

inline Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& w) {
  const auto sys = linalg::hermitian_eigensystem(w);
  Eigen::VectorXd root = sys.values.cwiseMax(0.0).cwiseSqrt();
  return sys.vectors * root.asDiagonal() * sys.vectors.adjoint();
}

/// <phi, sqrt(W) chi_I(H0 + sW) sqrt(W) phi> and the counts at both endpoints.
struct AveragingIntegrand {
  const Eigen::MatrixXcd& h0;
  const Eigen::MatrixXcd& w;
  Eigen::VectorXcd psi;  // sqrt(W) phi
  EnergyInterval interval;

  double operator()(double s) const {
    const auto sys = linalg::hermitian_eigensystem(h0 + s * w);
    double v = 0.0;
    for (Eigen::Index i = 0; i < sys.values.size(); ++i) {
      const double e = sys.values(i);
      if (e >= interval.lo() && e <= interval.hi()) v += std::norm(sys.vectors.col(i).dot(psi));
    }
    return v;
  }

  /// (#eigenvalues <= lo, #eigenvalues <= hi) of H0 + sW
  std::pair<std::size_t, std::size_t> counts(double s) const {
    const Eigen::VectorXd ev = linalg::hermitian_eigenvalues(h0 + s * w);
    std::vector<double> sorted(ev.data(), ev.data() + ev.size());
    return {count_at_or_below(sorted, interval.lo()), count_at_or_below(sorted, interval.hi())};
  }
};

/// Points in [lo, hi] where an eigenvalue of H0 + sW crosses an interval
/// endpoint. W >= 0 makes the counts monotone in s, so a coarse scan plus
/// bisection finds every crossing.
inline std::vector<double> crossing_points(const AveragingIntegrand& f, double lo, double hi, int scan) {
  std::vector<double> pts;
  std::function<void(double, double, std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>)> split =
      [&](double a, double b, auto ca, auto cb) {
        if (ca == cb) return;
        if (b - a < 1e-12 * std::max(1.0, std::abs(a))) {
          pts.push_back(0.5 * (a + b));
          return;
        }
        const double m = 0.5 * (a + b);
        const auto cm = f.counts(m);
        split(a, m, ca, cm);
        split(m, b, cm, cb);
      };
  auto prev = f.counts(lo);
  double prev_s = lo;
  for (int i = 1; i <= scan; ++i) {
    const double s = lo + (hi - lo) * i / scan;
    const auto c = f.counts(s);
    split(prev_s, s, prev, c);
    prev = c;
    prev_s = s;
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

/// Left-hand side of the averaging inequality, with its error bar.
struct AveragedProjection {
  double value = 0.0;
  double error = 0.0;
  std::size_t pieces = 0;
};

/// int dnu(s) <phi, sqrt(W) chi_I(H0 + sW) sqrt(W) phi>
///
/// Analytic densities: Gauss-Kronrod on each smooth piece between
/// eigenvalue crossings of the interval endpoints, support truncated where
/// the density drops below 1e-14 (the dropped mass is added to the error).
/// Empirical measures: sample mean and its standard error.
inline AveragedProjection averaged_projection(const Eigen::MatrixXcd& h0, const Eigen::MatrixXcd& w,
                                              const Eigen::VectorXcd& phi, EnergyInterval interval,
                                              const Measure& nu) {
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw SpecError("spectral averaging: phi must have unit norm");
  const Eigen::MatrixXcd root = detail::psd_sqrt(w);
  detail::AveragingIntegrand f{h0, w, root * phi, interval};
  AveragedProjection out;

  if (const auto* e = std::get_if<EmpiricalMeasure>(&nu)) {
    Accumulator acc;
    for (double s : e->samples()) acc.add(f(s));
    out.value = acc.mean();
    out.error = acc.stderr_mean();
    out.pieces = e->count();
    return out;
  }
  if (const auto* p = std::get_if<PointMass>(&nu)) {
    out.value = f(p->at);
    out.pieces = 1;
    return out;
  }

  double lo = 0.0;
  double hi = 0.0;
  double dropped = 0.0;
  std::function<double(double)> density;
  if (const auto* u = std::get_if<UniformMeasure>(&nu)) {
    lo = u->lo;
    hi = u->hi;
    density = [u](double) { return 1.0 / (u->hi - u->lo); };
  } else {
    const auto& m = std::get<StretchedExpMeasure>(nu);
    const double cut = std::pow(std::log(m.rho0() / 1e-14), 1.0 / m.alpha());
    lo = -cut;
    hi = cut;
    dropped = m.tail(cut);
    density = [m](double s) { return m.density(s); };
  }
  if (w.cwiseAbs().maxCoeff() == 0.0) {
    out.value = 0.0;
    out.pieces = 1;
    return out;
  }
  auto nodes = detail::crossing_points(f, lo, hi, 200);
  nodes.insert(nodes.begin(), lo);
  nodes.push_back(hi);
  const double bound = root.operatorNorm() * root.operatorNorm();
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    // keep the integration nodes off the crossing points themselves
    const double pad = 1e-10 * std::max(1.0, std::abs(nodes[i + 1] - nodes[i]));
    const double a = nodes[i] + (i == 0 ? 0.0 : pad);
    const double b = nodes[i + 1] - (i + 2 == nodes.size() ? 0.0 : pad);
    if (b <= a) continue;
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double s) { return f(s) * density(s); }, a, b, 8, 1e-10, &err);
    out.value += v;
    out.error += err + 2.0 * pad * bound * density(nodes[i]);
    ++out.pieces;
  }
  out.error += dropped * bound;
  return out;
}

struct SpectralAveragingConfig {
  std::size_t dimension = 64;   // lattice side is sqrt(dimension)
  std::size_t n_trials = 50;
  std::uint64_t seed = 0;
  double background_lambda = 0.5;  // disorder on the other sites of H0
  Measure nu = StretchedExpMeasure(2.0);
  std::size_t workers = 1;
};

/// Randomized trials of the averaging inequality: H0 a disordered magnetic
/// lattice of N = L^2 sites, W the indicator of a random site, phi a random
/// unit vector, I a random interval inside the spectral window.
inline std::vector<SpectralAveragingTrial> spectral_averaging_check(const SpectralAveragingConfig& cfg) {
  const int L = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cfg.dimension))));
  if (static_cast<std::size_t>(L) * static_cast<std::size_t>(L) != cfg.dimension || L < 2)
    throw SpecError("spectral_averaging_check: dimension must be a square L^2 with L >= 2");
  if (cfg.dimension > 256) throw SpecError("spectral_averaging_check: dimension must be <= 256");
  std::vector<std::pair<int, int>> fluxes;
  for (int q = 1; q <= L; ++q)
    if (L % q == 0)
      for (int p = 0; p < q; ++p)
        if (std::gcd(p, q) == 1) fluxes.emplace_back(p, q);
  const auto exp_id = experiment_id("spectral_averaging");
  return parallel_map(cfg.n_trials, cfg.workers, [&](std::size_t t) {
    Rng rng = make_rng(derive_seed(cfg.seed, exp_id, t));
    std::uniform_int_distribution<std::size_t> pick_flux(0, fluxes.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_site(0, cfg.dimension - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    ModelSpec spec;
    spec.L = L;
    std::tie(spec.flux_p, spec.flux_q) = fluxes[pick_flux(rng)];
    spec.lambda = cfg.background_lambda;
    spec.alpha = 2.0;
    DisorderRealization d{StretchedExpMeasure(2.0).sample(rng, cfg.dimension), 0, 2.0};
    const std::size_t site = pick_site(rng);
    d.omegas[site] = 0.0;  // the averaged coupling lives on this site
    SpectralAveragingTrial trial;
    trial.h0 = build_random_hamiltonian(spec, d).dense();
    trial.w = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(cfg.dimension), static_cast<Eigen::Index>(cfg.dimension));
    trial.w(static_cast<Eigen::Index>(site), static_cast<Eigen::Index>(site)) = 1.0;
    trial.phi.resize(static_cast<Eigen::Index>(cfg.dimension));
    for (auto& z : trial.phi) z = cplx(g(rng), g(rng));
    trial.phi.normalize();
    const double width = 0.02 + 1.5 * u(rng);
    trial.interval = {-0.5 + 9.0 * u(rng), width};
    trial.w_norm = 1.0;
    const auto avg = averaged_projection(trial.h0, trial.w, trial.phi, trial.interval, cfg.nu);
    trial.lhs = avg.value;
    trial.lhs_error = avg.error;
    trial.pieces = avg.pieces;
    trial.rhs = concentration(cfg.nu, width);
    trial.pass = trial.lhs <= trial.rhs + 3.0 * trial.lhs_error;
    return trial;
  });
}

inline void write_spectral_averaging_csv(std::ostream& os, const std::vector<SpectralAveragingTrial>& trials) {
  CsvWriter csv(os);
  csv.header({"trial", "interval_center", "interval_width", "w_norm", "lhs", "lhs_error", "rhs", "pieces", "pass"});
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    csv.row(i, t.interval.center, t.interval.width, t.w_norm, t.lhs, t.lhs_error, t.rhs, t.pieces, t.pass);
  }
}

// ---------------------------------------------------------------------------
// single-site trace bound

struct TraceEstimate {
  int L = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
  double max_value = 0.0;
};

/// E{ |omega_0|^a <delta_0, E_H(I) delta_0> } at the centre site.
inline TraceEstimate sgee_trace_check(const ModelSpec& spec, const Measure& measure, EnergyInterval interval,
                                      double a_exponent, std::size_t n_realizations, std::uint64_t seed,
                                      std::size_t workers = 1) {
  spec.validate();
  if (a_exponent < 0.0) throw SpecError("sgee_trace_check: exponent must be >= 0");
  if (!(interval.width > 0.0) || !std::isfinite(interval.width)) throw SpecError("sgee_trace_check: bounded interval required");
  if (n_realizations == 0) throw SpecError("sgee_trace_check: n_realizations must be >= 1");
  const std::size_t centre = site_index(spec.L, spec.L / 2, spec.L / 2);
  const auto exp_id = experiment_id("sgee") ^ static_cast<std::uint64_t>(spec.L);
  const auto values = parallel_map(n_realizations, workers, [&](std::size_t r) {
    const auto d = draw_disorder(spec, measure, derive_seed(seed, exp_id, r));
    const auto s = full_spectrum(build_random_hamiltonian(spec, d), true);
    double weight = 0.0;
    for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
      const double e = s.eigenvalues[i];
      if (e > interval.lo() && e <= interval.hi())
        weight += std::norm((*s.eigenvectors)(static_cast<Eigen::Index>(centre), static_cast<Eigen::Index>(i)));
    }
    const double coupling = a_exponent == 0.0 ? 1.0 : std::pow(std::abs(d.omegas[centre]), a_exponent);
    return coupling * weight;
  });
  TraceEstimate out;
  out.L = spec.L;
  Accumulator acc;
  for (double v : values) {
    acc.add(v);
    out.max_value = std::max(out.max_value, v);
  }
  out.mean = acc.mean();
  out.stderr_ = acc.stderr_mean();
  out.n = acc.count();
  return out;
}

/// Two estimates agree within `sigmas` combined standard errors.
inline bool agree_within(const TraceEstimate& a, const TraceEstimate& b, double sigmas = 3.0) {
  const double se = std::hypot(a.stderr_, b.stderr_);
  return std::abs(a.mean - b.mean) <= sigmas * se;
}

// ---------------------------------------------------------------------------
// gap survival

struct GapSurvival {
  ProbabilityEstimate probability;
  std::size_t conditioned = 0;       // realizations with all |omega_j| <= eps
  std::size_t weyl_violations = 0;   // conditioned realizations breaking the containment
  double worst_shift_ratio = 0.0;    // max_i |E_i - E_i^0| / (lambda eps) over conditioned realizations
};

/// P{ all |omega_j| <= eps } against (1 - P(|omega| > eps))^{L^2}; on the
/// event every eigenvalue must stay within lambda eps of its clean partner.
inline GapSurvival gap_survival_probability(const ModelSpec& spec, const StretchedExpMeasure& mu, double eps,
                                            std::size_t n_realizations, std::uint64_t seed,
                                            std::size_t workers = 1) {
  spec.validate();
  if (!(eps > 0.0)) throw SpecError("gap_survival_probability: eps must be > 0");
  if (!(spec.lambda > 0.0 && spec.lambda <= 1.0)) throw SpecError("gap_survival_probability: lambda must lie in (0, 1]");
  if (n_realizations == 0) throw SpecError("gap_survival_probability: n_realizations must be >= 1");
  const auto clean = full_spectrum(build_clean_hamiltonian(spec)).eigenvalues;
  const double exact = std::pow(1.0 - mu.tail(eps), static_cast<double>(spec.sites()));
  const auto exp_id = experiment_id("gap_survival");
  struct Outcome {
    bool event = false;
    double ratio = 0.0;
  };
  const auto outcomes = parallel_map(n_realizations, workers, [&](std::size_t r) {
    const auto d = draw_disorder(spec, Measure{mu}, derive_seed(seed, exp_id, r));
    Outcome o;
    o.event = std::all_of(d.omegas.begin(), d.omegas.end(), [eps](double w) { return std::abs(w) <= eps; });
    if (!o.event) return o;
    const auto ev = full_spectrum(build_random_hamiltonian(spec, d)).eigenvalues;
    for (std::size_t i = 0; i < ev.size(); ++i) o.ratio = std::max(o.ratio, std::abs(ev[i] - clean[i]) / (spec.lambda * eps));
    return o;
  });
  GapSurvival out;
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    if (!o.event) continue;
    ++hits;
    out.worst_shift_ratio = std::max(out.worst_shift_ratio, o.ratio);
    if (o.ratio * spec.lambda * eps > spec.lambda * eps + 1e-10) ++out.weyl_violations;
  }
  out.conditioned = hits;
  out.probability = ProbabilityEstimate::from_counts(hits, n_realizations, exact);
  return out;
}

}  // namespace landau
