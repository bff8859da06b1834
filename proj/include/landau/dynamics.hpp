#pragma once

// Energy-filtered wave packets: Chebyshev application of a smooth bump
// X(H), Chebyshev-Bessel propagation e^{-itH}, the position moments
// M(p, X, t) on an open box and their Laplace time averages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <fftw3.h>
#include <json.hpp>

#include "landau/common.hpp"
#include "landau/csv.hpp"
#include "landau/measures.hpp"
#include "landau/model.hpp"
#include "landau/parallel.hpp"
#include "landau/rng.hpp"
#include "landau/stats.hpp"

namespace landau {

/// X(E) = exp(1 - 1/(1 - ((E - E0)/w)^2)) on |E - E0| < w, zero outside.
struct EnergyFilter {
  double center = 0.0;
  double half_width = 1.0;

  EnergyFilter() = default;
  EnergyFilter(double c, double w) : center(c), half_width(w) {
    if (!(w > 0.0) || !std::isfinite(w) || !std::isfinite(c)) throw SpecError("filter half-width must be positive and finite");
  }

  double operator()(double e) const noexcept {
    const double x = (e - center) / half_width;
    if (std::abs(x) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - x * x));
  }
  double lo() const noexcept { return center - half_width; }
  double hi() const noexcept { return center + half_width; }
};

/// Chebyshev series of a filter on a spectral interval [lo, hi].
struct FilterExpansion {
  EnergyFilter filter;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> coefficients;  // c_0 already halved
  double max_error = 0.0;            // on the check grid

  std::size_t order() const noexcept { return coefficients.size(); }
  double mid() const noexcept { return 0.5 * (hi + lo); }
  double radius() const noexcept { return 0.5 * (hi - lo); }

  /// Clenshaw evaluation at an energy in [lo, hi].
  double evaluate(double e) const {
    const double s = (e - mid()) / radius();
    double b1 = 0.0;
    double b2 = 0.0;
    for (std::size_t n = coefficients.size(); n-- > 1;) {
      const double b0 = 2.0 * s * b1 - b2 + coefficients[n];
      b2 = b1;
      b1 = b0;
    }
    return s * b1 - b2 + coefficients[0];
  }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Chebyshev coefficients of f on [-1, 1] from m Chebyshev nodes (DCT-II).
template <class F>
std::vector<double> chebyshev_coefficients(F&& f, std::size_t m) {
  std::vector<double> in(m);
  std::vector<double> out(m);
  for (std::size_t k = 0; k < m; ++k) in[k] = f(std::cos(pi * (static_cast<double>(k) + 0.5) / static_cast<double>(m)));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_r2r_1d(static_cast<int>(m), in.data(), out.data(), FFTW_REDFT10, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  for (auto& c : out) c /= static_cast<double>(m);
  out[0] *= 0.5;
  return out;
}

}  // namespace detail

/// Adaptive expansion: the node count doubles until the truncated series
/// is within `tolerance` of X on a Chebyshev check grid.
inline FilterExpansion expand_filter(const EnergyFilter& filter, double lo, double hi, double tolerance = 1e-8) {
  if (!(hi > lo)) throw SpecError("expand_filter: empty spectral interval");
  FilterExpansion ex;
  ex.filter = filter;
  ex.lo = lo;
  ex.hi = hi;
  const auto f = [&](double s) { return filter(ex.mid() + ex.radius() * s); };
  for (std::size_t m = 64; m <= (std::size_t{1} << 20); m *= 2) {
    auto c = detail::chebyshev_coefficients(f, m);
    // drop the tail whose absolute sum is far below tolerance
    double tail = 0.0;
    std::size_t keep = c.size();
    while (keep > 1 && tail + std::abs(c[keep - 1]) < 0.01 * tolerance) tail += std::abs(c[--keep]);
    c.resize(keep);
    ex.coefficients = std::move(c);
    const std::size_t check = 4 * keep + 64;
    ex.max_error = 0.0;
    for (std::size_t k = 0; k < check; ++k) {
      const double s = std::cos(pi * (static_cast<double>(k) + 0.5) / static_cast<double>(check));
      const double e = ex.mid() + ex.radius() * s;
      ex.max_error = std::max(ex.max_error, std::abs(ex.evaluate(e) - filter(e)));
    }
    if (ex.max_error <= tolerance && keep < m) return ex;
  }
  throw NumericalError("expand_filter: no Chebyshev order reached tolerance " + brief(tolerance));
}

/// Padded Gershgorin enclosure used for Chebyshev scaling.
inline std::pair<double, double> scaling_interval(const HermitianOperator& h) {
  auto [lo, hi] = h.gershgorin_bounds();
  const double pad = 1e-3 * std::max(1.0, hi - lo);
  return {lo - pad, hi + pad};
}

namespace detail {

/// y = (H - mid) v / radius
inline void scaled_apply(const HermitianOperator::Sparse& h, double mid, double radius, const Eigen::VectorXcd& v,
                         Eigen::VectorXcd& y) {
  y.noalias() = h * v;
  y -= mid * v;
  y /= radius;
}

}  // namespace detail

struct FilteredVector {
  Eigen::VectorXcd vector;
  std::size_t order = 0;
  bool disjoint = false;  // filter support misses the spectral enclosure
};

inline FilteredVector apply_filter(const HermitianOperator& h, const FilterExpansion& ex, const Eigen::VectorXcd& v) {
  if (static_cast<std::size_t>(v.size()) != h.dimension()) throw SpecError("apply_filter: dimension mismatch");
  FilteredVector out;
  out.order = ex.order();
  auto [glo, ghi] = h.gershgorin_bounds();
  if (ex.filter.hi() <= glo || ex.filter.lo() >= ghi) {
    out.vector = Eigen::VectorXcd::Zero(v.size());
    out.disjoint = true;
    return out;
  }
  if (glo < ex.lo || ghi > ex.hi) throw SpecError("apply_filter: expansion interval does not enclose the spectrum");
  const auto& m = h.matrix();
  Eigen::VectorXcd prev = v;
  Eigen::VectorXcd cur(v.size());
  Eigen::VectorXcd next(v.size());
  out.vector = ex.coefficients[0] * v;
  if (ex.order() > 1) {
    detail::scaled_apply(m, ex.mid(), ex.radius(), prev, cur);
    out.vector += ex.coefficients[1] * cur;
  }
  for (std::size_t n = 2; n < ex.order(); ++n) {
    detail::scaled_apply(m, ex.mid(), ex.radius(), cur, next);
    next = 2.0 * next - prev;
    out.vector += ex.coefficients[n] * next;
    std::swap(prev, cur);
    std::swap(cur, next);
  }
  return out;
}

inline FilteredVector apply_filter(const HermitianOperator& h, const EnergyFilter& filter, const Eigen::VectorXcd& v) {
  const auto [lo, hi] = scaling_interval(h);
  auto [glo, ghi] = h.gershgorin_bounds();
  if (filter.hi() <= glo || filter.lo() >= ghi) {
    FilteredVector out;
    out.vector = Eigen::VectorXcd::Zero(v.size());
    out.disjoint = true;
    return out;
  }
  return apply_filter(h, expand_filter(filter, lo, hi), v);
}

/// Largest Bessel argument handled in one Chebyshev step.
inline constexpr double max_step_argument = 40.0;

/// e^{-itH} v by Chebyshev-Bessel series, split into steps with
/// radius * dt <= 40; each series stops once |J_n| < 1e-14 past n > x.
inline Eigen::VectorXcd evolve(const HermitianOperator& h, const Eigen::VectorXcd& v, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw SpecError("evolve: t must be finite and >= 0");
  if (static_cast<std::size_t>(v.size()) != h.dimension()) throw SpecError("evolve: dimension mismatch");
  if (t == 0.0) return v;
  const auto [lo, hi] = scaling_interval(h);
  const double mid = 0.5 * (hi + lo);
  const double radius = 0.5 * (hi - lo);
  const auto steps = static_cast<std::size_t>(std::ceil(radius * t / max_step_argument));
  const double dt = t / static_cast<double>(steps);
  const double x = radius * dt;
  std::vector<cplx> coeff;
  for (int n = 0;; ++n) {
    const double j = std::cyl_bessel_j(static_cast<double>(n), x);
    coeff.push_back((n == 0 ? 1.0 : 2.0) * std::pow(cplx(0.0, -1.0), n) * j);
    if (n > x && std::abs(j) < 1e-14) break;
  }
  const cplx phase = std::polar(1.0, -mid * dt);
  const auto& m = h.matrix();
  Eigen::VectorXcd psi = v;
  Eigen::VectorXcd prev(v.size());
  Eigen::VectorXcd cur(v.size());
  Eigen::VectorXcd next(v.size());
  Eigen::VectorXcd acc(v.size());
  for (std::size_t s = 0; s < steps; ++s) {
    prev = psi;
    acc = coeff[0] * prev;
    detail::scaled_apply(m, mid, radius, prev, cur);
    acc += coeff[1] * cur;
    for (std::size_t n = 2; n < coeff.size(); ++n) {
      detail::scaled_apply(m, mid, radius, cur, next);
      next = 2.0 * next - prev;
      acc += coeff[n] * next;
      std::swap(prev, cur);
      std::swap(cur, next);
    }
    psi = phase * acc;
  }
  return psi;
}

// ---------------------------------------------------------------------------
// moments

/// Width of the boundary layer watched by the leakage guard.
inline constexpr int boundary_layer = 5;
inline constexpr double leakage_tolerance = 1e-6;

struct LatticeGeometry {
  int L = 0;
  int center = 0;  // both coordinates
  std::vector<double> bracket_sq;  // <x>^2 = 1 + |x - x_c|^2 per site
  std::vector<char> in_layer;      // within boundary_layer of the boundary

  explicit LatticeGeometry(int side) : L(side), center(side / 2) {
    bracket_sq.resize(static_cast<std::size_t>(L) * L);
    in_layer.resize(bracket_sq.size());
    for (int x2 = 0; x2 < L; ++x2)
      for (int x1 = 0; x1 < L; ++x1) {
        const auto i = site_index(L, x1, x2);
        const double d1 = x1 - center;
        const double d2 = x2 - center;
        bracket_sq[i] = 1.0 + d1 * d1 + d2 * d2;
        in_layer[i] = std::min({x1, x2, L - 1 - x1, L - 1 - x2}) < boundary_layer;
      }
  }

  double moment(const Eigen::VectorXcd& psi, double p) const {
    double m = 0.0;
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
      const double w = p == 2.0 ? bracket_sq[i] : std::pow(bracket_sq[i], 0.5 * p);
      m += w * std::norm(psi(i));
    }
    return m;
  }

  double leakage(const Eigen::VectorXcd& psi) const {
    double m = 0.0;
    for (Eigen::Index i = 0; i < psi.size(); ++i)
      if (in_layer[i]) m += std::norm(psi(i));
    return m;
  }
};

struct TransportRecord {
  double p = 2.0;
  EnergyFilter filter;
  std::size_t filter_order = 0;
  std::vector<double> t_grid;
  std::vector<double> m_mean;
  std::vector<double> m_stderr;
  std::vector<std::vector<double>> samples;  // [realization][time]
  std::vector<std::uint64_t> seeds;
  std::vector<double> T_grid;
  std::vector<double> tam_mean;
  std::vector<double> tam_stderr;
  std::vector<double> tam_truncation;  // e^{-10} sup M
  std::string boundary = "open";
  double max_leakage = 0.0;
  double lambda = 0.0;
  int L = 0;

  void write_moment_csv(std::ostream& os) const {
    CsvWriter csv(os);
    csv.header({"t", "M_mean", "M_stderr"});
    for (std::size_t k = 0; k < t_grid.size(); ++k) csv.row(t_grid[k], m_mean[k], m_stderr[k]);
  }
  void write_tam_csv(std::ostream& os) const {
    CsvWriter csv(os);
    csv.header({"T", "tam_mean", "tam_stderr"});
    for (std::size_t k = 0; k < T_grid.size(); ++k) csv.row(T_grid[k], tam_mean[k], tam_stderr[k]);
  }
  nlohmann::json to_json() const {
    return {{"p", p},
            {"filter", {{"center", filter.center}, {"half_width", filter.half_width}, {"order", filter_order}}},
            {"lambda", lambda},
            {"L", L},
            {"boundary", boundary},
            {"max_leakage", max_leakage},
            {"leakage_horizon", t_grid.empty() ? 0.0 : t_grid.back()},
            {"seeds", seeds}};
  }
};

/// Log-spaced times: 0, then `per_decade` nodes per decade from t_min to t_max.
inline std::vector<double> log_time_grid(double t_min, double t_max, int per_decade = 40) {
  if (!(t_min > 0.0 && t_max > t_min)) throw SpecError("log_time_grid: need 0 < t_min < t_max");
  if (per_decade < 1) throw SpecError("log_time_grid: per_decade must be >= 1");
  std::vector<double> t{0.0};
  const double decades = std::log10(t_max / t_min);
  const auto n = static_cast<int>(std::ceil(decades * per_decade));
  for (int k = 0; k <= n; ++k) t.push_back(t_min * std::pow(t_max / t_min, static_cast<double>(k) / n));
  return t;
}

struct MomentConfig {
  double p = 2.0;
  std::size_t n_realizations = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Disorder-averaged M(p, X, t) for the centre-site indicator on an open box.
inline TransportRecord moment(const ModelSpec& spec, const Measure& measure, const EnergyFilter& filter,
                              const std::vector<double>& t_grid, const MomentConfig& cfg) {
  spec.validate();
  if (cfg.p < 0.0) throw SpecError("moment: p must be >= 0");
  if (t_grid.empty() || t_grid.front() != 0.0 || !std::is_sorted(t_grid.begin(), t_grid.end()))
    throw SpecError("moment: time grid must start at 0 and be ascending");
  if (cfg.n_realizations == 0) throw SpecError("moment: n_realizations must be >= 1");
  if (spec.L <= 2 * boundary_layer) throw SpecError("moment: L too small for the boundary layer");
  const LatticeGeometry geo(spec.L);
  const auto exp_id = experiment_id("dynamics");
  const auto origin = site_index(spec.L, geo.center, geo.center);

  struct Run {
    std::vector<double> m;
    double leak = 0.0;
    double horizon = 0.0;  // last admissible time
    bool leaked = false;
    std::size_t order = 0;
    std::uint64_t seed = 0;
  };
  const auto runs = parallel_map(cfg.n_realizations, cfg.workers, [&](std::size_t r) {
    Run run;
    run.seed = derive_seed(cfg.seed, exp_id, r);
    const auto d = draw_disorder(spec, measure, run.seed);
    const auto h = build_random_hamiltonian(spec, d, {}, Boundary::open);
    Eigen::VectorXcd chi = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(spec.sites()));
    chi(static_cast<Eigen::Index>(origin)) = 1.0;
    const auto filtered = apply_filter(h, filter, chi);
    run.order = filtered.order;
    Eigen::VectorXcd psi = filtered.vector;
    double now = 0.0;
    for (double t : t_grid) {
      psi = evolve(h, psi, t - now);
      now = t;
      const double leak = geo.leakage(psi);
      if (leak >= leakage_tolerance) {
        run.leaked = true;
        run.leak = leak;
        break;
      }
      run.leak = std::max(run.leak, leak);
      run.horizon = t;
      run.m.push_back(geo.moment(psi, cfg.p));
    }
    return run;
  });

  double horizon = t_grid.back();
  bool leaked = false;
  for (const auto& run : runs)
    if (run.leaked) {
      leaked = true;
      horizon = std::min(horizon, run.horizon);
    }
  if (leaked)
    throw BoundaryLeakError("state reaches the boundary layer of the L = " + std::to_string(spec.L) +
                                " box; maximal admissible time " + brief(horizon),
                            horizon);

  TransportRecord rec;
  rec.p = cfg.p;
  rec.filter = filter;
  rec.t_grid = t_grid;
  rec.lambda = spec.lambda;
  rec.L = spec.L;
  for (const auto& run : runs) {
    rec.samples.push_back(run.m);
    rec.seeds.push_back(run.seed);
    rec.max_leakage = std::max(rec.max_leakage, run.leak);
    rec.filter_order = std::max(rec.filter_order, run.order);
  }
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    Accumulator acc;
    for (const auto& s : rec.samples) acc.add(s[k]);
    rec.m_mean.push_back(acc.mean());
    rec.m_stderr.push_back(acc.stderr_mean());
  }
  return rec;
}

/// (1/T) int_0^{10T} M(t) e^{-t/T} dt with M piecewise linear between
/// grid nodes and the exponential weight integrated exactly per panel.
inline double laplace_average(const std::vector<double>& t, const std::vector<double>& m, double T) {
  const double cut = 10.0 * T;
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < t.size() && t[k] < cut; ++k) {
    const double a = t[k];
    const double b = std::min(t[k + 1], cut);
    const double slope = (m[k + 1] - m[k]) / (t[k + 1] - t[k]);
    const double ma = m[k];
    const double mb = m[k] + slope * (b - a);
    // int_a^b (ma + slope (s - a)) e^{-s/T} ds / T
    const double ea = std::exp(-a / T);
    const double eb = std::exp(-b / T);
    sum += ma * ea - mb * eb + slope * T * (ea - eb);
  }
  return sum;
}

/// Adds the time averages for each T; requires the grid to reach 10 T.
inline TransportRecord time_averaged_moment(TransportRecord rec, const std::vector<double>& T_grid) {
  if (rec.t_grid.empty()) throw SpecError("time_averaged_moment: empty record");
  for (double T : T_grid) {
    if (!(T > 0.0)) throw SpecError("time_averaged_moment: T must be > 0");
    if (rec.t_grid.back() < 10.0 * T * (1.0 - 1e-12))
      throw SpecError("time_averaged_moment: time grid ends at " + brief(rec.t_grid.back()) + " < 10 T = " +
                      brief(10.0 * T));
  }
  rec.T_grid = T_grid;
  rec.tam_mean.clear();
  rec.tam_stderr.clear();
  rec.tam_truncation.clear();
  double sup = 0.0;
  for (double v : rec.m_mean) sup = std::max(sup, v);
  for (double T : T_grid) {
    Accumulator acc;
    for (const auto& s : rec.samples) acc.add(laplace_average(rec.t_grid, s, T));
    rec.tam_mean.push_back(acc.mean());
    rec.tam_stderr.push_back(acc.stderr_mean());
    rec.tam_truncation.push_back(std::exp(-10.0) * sup);
  }
  return rec;
}

}  // namespace landau
