#pragma once

// Hall conductance as the Chern number of the Fermi projection over the
// torus of boundary twists, plateau scans, mobility-window estimates and
// the usual localization diagnostics (gap ratios, IPR).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "landau/common.hpp"
#include "landau/csv.hpp"
#include "landau/linalg.hpp"
#include "landau/measures.hpp"
#include "landau/model.hpp"
#include "landau/parallel.hpp"
#include "landau/rng.hpp"
#include "landau/stats.hpp"

namespace landau {

/// Tolerance for the filling gap along the twist torus.
inline constexpr double gap_closing_tolerance = 1e-8;
/// Fermi energies closer than this to a zero-twist level are degenerate.
inline constexpr double fermi_level_tolerance = 1e-10;

struct ChernResult {
  double fermi_energy = 0.0;
  int chern = 0;
  double raw = 0.0;                 // curvature sum / 2 pi before rounding
  std::vector<double> curvature;    // n x n plaquette field, row index = theta1
  int grid = 0;
  std::optional<std::uint64_t> seed;
  std::size_t filling = 0;
  double min_gap = 0.0;             // smallest filling gap seen on the grid
};

/// Eigendata of H(theta1, theta2) on an n x n grid of the twist torus.
/// H is exactly 2 pi periodic in both twists, so the grid closes without
/// a gauge transformation.
class TwistTorus {
 public:
  /// `keep` = number of lowest eigenvectors stored per twist; by default
  /// the filling at `max_energy` (zero twist) plus one.
  TwistTorus(const ModelSpec& spec, const DisorderRealization* disorder, int n, std::optional<double> max_energy = {})
      : spec_(spec), n_(n) {
    spec.validate();
    if (n < 6) throw SpecError("twist grid must be at least 6 x 6");
    if (disorder) seed_ = disorder->seed;
    auto build = [&](Twist tw) {
      return disorder ? build_random_hamiltonian(spec, *disorder, tw).dense() : build_clean_hamiltonian(spec, tw).dense();
    };
    const std::size_t N = spec.sites();
    std::size_t keep = N;
    if (max_energy) {
      const Eigen::VectorXd e0 = linalg::hermitian_eigenvalues(build({}));
      keep = std::min<std::size_t>(N, count_le(e0, *max_energy) + 1);
    }
    points_.resize(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Twist tw{2.0 * pi * i / n, 2.0 * pi * j / n};
        points_[index(i, j)] = keep == N ? linalg::hermitian_eigensystem(build(tw)) : linalg::hermitian_lowest(build(tw), keep);
      }
  }

  int grid() const noexcept { return n_; }
  std::size_t dimension() const noexcept { return spec_.sites(); }
  std::size_t stored() const noexcept { return static_cast<std::size_t>(points_.front().vectors.cols()); }
  const ModelSpec& spec() const noexcept { return spec_; }
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }
  const linalg::Eigensystem& at(int i, int j) const { return points_[index(i, j)]; }
  const Eigen::VectorXd& zero_twist_levels() const { return points_.front().values; }

  /// Occupied count at zero twist for a Fermi energy; throws on a degenerate level.
  std::size_t filling(double fermi_energy) const {
    const auto& e = zero_twist_levels();
    for (Eigen::Index i = 0; i < e.size(); ++i)
      if (std::abs(e(i) - fermi_energy) < fermi_level_tolerance)
        throw NumericalError("degenerate Fermi level: E_F = " + brief(fermi_energy) +
                             " coincides with an eigenvalue at zero twist");
    return count_le(e, fermi_energy);
  }

  /// Chern number of the lowest `filling` states; gap closing is an error.
  ChernResult chern_of_filling(std::size_t filling, double fermi_energy) const {
    ChernResult out;
    out.fermi_energy = fermi_energy;
    out.filling = filling;
    out.grid = n_;
    out.seed = seed_;
    out.min_gap = std::numeric_limits<double>::infinity();
    if (filling == 0 || filling == dimension()) {
      out.curvature.assign(static_cast<std::size_t>(n_) * n_, 0.0);
      return out;
    }
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        const auto& v = at(i, j).values;
        const double gap = v(static_cast<Eigen::Index>(filling)) - v(static_cast<Eigen::Index>(filling) - 1);
        out.min_gap = std::min(out.min_gap, gap);
        if (gap < gap_closing_tolerance)
          throw GapClosingError("filling gap closes (" + brief(gap) + ") at twist (" +
                                    brief(2.0 * pi * i / n_) + ", " + brief(2.0 * pi * j / n_) + ")",
                                2.0 * pi * i / n_, 2.0 * pi * j / n_);
      }
    return states_chern(0, filling, out);
  }

  /// Chern number of the states [first, first + count) (a band on its own).
  ChernResult chern_of_states(std::size_t first, std::size_t count) const {
    ChernResult out;
    out.grid = n_;
    out.seed = seed_;
    out.filling = count;
    out.min_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        const auto& v = at(i, j).values;
        if (first > 0) out.min_gap = std::min(out.min_gap, v(first) - v(first - 1));
        if (first + count < dimension()) out.min_gap = std::min(out.min_gap, v(first + count) - v(first + count - 1));
      }
    if (out.min_gap < gap_closing_tolerance) throw GapClosingError("band is not isolated on the twist grid", 0.0, 0.0);
    return states_chern(first, count, out);
  }

 private:
  static std::size_t count_le(const Eigen::VectorXd& e, double x) {
    return static_cast<std::size_t>(std::upper_bound(e.data(), e.data() + e.size(), x) - e.data());
  }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(((i % n_) + n_) % n_) * n_ + ((j % n_) + n_) % n_; }

  /// phase of det(<u_a(k) | u_b(k')>) over the chosen states
  double link_phase(int i0, int j0, int i1, int j1, std::size_t first, std::size_t count) const {
    const auto& a = at(i0, j0).vectors;
    const auto& b = at(i1, j1).vectors;
    const auto fi = static_cast<Eigen::Index>(first);
    const auto c = static_cast<Eigen::Index>(count);
    const Eigen::MatrixXcd overlap = a.middleCols(fi, c).adjoint() * b.middleCols(fi, c);
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(overlap);
    double phase = lu.permutationP().determinant() < 0 ? pi : 0.0;
    const auto& m = lu.matrixLU();
    for (Eigen::Index k = 0; k < c; ++k) phase += std::arg(m(k, k));
    return phase;
  }

  ChernResult states_chern(std::size_t first, std::size_t count, ChernResult out) const {
    if (first + count > stored())
      throw SpecError("twist torus stores only " + std::to_string(stored()) + " eigenvectors per point");
    // link phases: u1(i,j) from (i,j) to (i+1,j), u2(i,j) from (i,j) to (i,j+1)
    std::vector<double> u1(points_.size());
    std::vector<double> u2(points_.size());
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        u1[index(i, j)] = link_phase(i, j, i + 1, j, first, count);
        u2[index(i, j)] = link_phase(i, j, i, j + 1, first, count);
      }
    out.curvature.resize(points_.size());
    double total = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        const double f = u1[index(i, j)] + u2[index(i + 1, j)] - u1[index(i, j + 1)] - u2[index(i, j)];
        // principal branch (-pi, pi]; the orientation sign makes sigma_H
        // positive in the lowest gap for positive flux
        const double principal = f - 2.0 * pi * std::ceil((f - pi) / (2.0 * pi));
        out.curvature[index(i, j)] = -principal;
        total -= principal;
      }
    out.raw = total / (2.0 * pi);
    out.chern = static_cast<int>(std::lround(out.raw));
    if (std::abs(out.raw - out.chern) > 1e-6)
      throw NumericalError("Chern sum not integral: " + brief(out.raw));
    return out;
  }

  ModelSpec spec_;
  int n_;
  std::optional<std::uint64_t> seed_;
  std::vector<linalg::Eigensystem> points_;
};

/// Chern number of the Fermi projection. The filling is fixed by the
/// zero-twist spectrum; it must stay gapped (>= 1e-8) over the whole grid.
inline ChernResult chern_number(const ModelSpec& spec, const DisorderRealization* disorder, double fermi_energy,
                                int twist_grid_n) {
  const TwistTorus torus(spec, disorder, twist_grid_n, fermi_energy);
  return torus.chern_of_filling(torus.filling(fermi_energy), fermi_energy);
}

inline ChernResult chern_number(const ModelSpec& spec, const DisorderRealization& disorder, double fermi_energy,
                                int twist_grid_n) {
  return chern_number(spec, &disorder, fermi_energy, twist_grid_n);
}

// ---------------------------------------------------------------------------
// plateau scan

struct HallPoint {
  double energy = 0.0;
  std::map<int, std::size_t> histogram;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n_ok = 0;
  std::size_t n_fail = 0;

  /// fraction of realizations outside the modal integer
  double minority_fraction() const {
    if (n_ok == 0) return 0.0;
    std::size_t top = 0;
    for (const auto& [k, c] : histogram) top = std::max(top, c);
    return 1.0 - static_cast<double>(top) / static_cast<double>(n_ok);
  }
  int modal() const {
    int best = 0;
    std::size_t top = 0;
    for (const auto& [k, c] : histogram)
      if (c > top) {
        top = c;
        best = k;
      }
    return best;
  }
  std::string histogram_string() const {
    std::string s;
    for (const auto& [k, c] : histogram) s += (s.empty() ? "" : ";") + std::to_string(k) + ":" + std::to_string(c);
    return s;
  }
};

struct Plateau {
  double e_lo = 0.0;
  double e_hi = 0.0;
  int value = 0;
};

/// Per-realization eigendata needed by the localization cross-checks.
struct ZeroTwistStates {
  std::vector<double> levels;
  std::vector<double> iprs;  // one per stored eigenvector
};

struct HallCurve {
  double lambda = 0.0;
  double mixed_threshold = 0.1;
  std::vector<HallPoint> points;
  std::vector<Plateau> plateaus;
  std::vector<double> jumps;           // midpoints between consecutive plateaus
  std::vector<ZeroTwistStates> states;  // per realization

  void write_csv(std::ostream& os, bool with_header = true) const {
    CsvWriter csv(os);
    if (with_header) csv.header({"E_F", "lambda", "chern_mean", "chern_stderr", "integer_histogram", "n_fail"});
    for (const auto& p : points) csv.row(p.energy, lambda, p.mean, p.stderr_, p.histogram_string(), p.n_fail);
  }
};

inline double ipr(const Eigen::Ref<const Eigen::VectorXcd>& v) {
  if (std::abs(v.norm() - 1.0) > 1e-8) throw SpecError("ipr: vector is not normalized");
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::norm(v(i)), 2);
  return s;
}

struct HallScanConfig {
  int twist_grid_n = 6;
  std::size_t workers = 1;
  double mixed_threshold = 0.1;
  bool keep_states = false;
};

/// Disorder-averaged Chern number on an energy grid. Gap-closing and
/// degenerate-level failures are counted per (E_F, realization) and excluded.
inline HallCurve hall_plateau_scan(const ModelSpec& spec, const Measure& measure, const std::vector<double>& energies,
                                   std::size_t n_realizations, std::uint64_t seed, const HallScanConfig& cfg = {}) {
  spec.validate();
  if (energies.empty()) throw SpecError("hall_plateau_scan: empty energy grid");
  if (!std::is_sorted(energies.begin(), energies.end())) throw SpecError("hall_plateau_scan: energy grid must be ascending");
  if (n_realizations == 0) throw SpecError("hall_plateau_scan: n_realizations must be >= 1");
  const double e_max = energies.back();
  const auto exp_id = experiment_id("hall");
  struct PerRealization {
    std::vector<std::optional<int>> chern;
    ZeroTwistStates states;
  };
  const auto runs = parallel_map(n_realizations, cfg.workers, [&](std::size_t r) {
    const auto d = draw_disorder(spec, measure, derive_seed(seed, exp_id, r));
    const TwistTorus torus(spec, spec.lambda == 0.0 ? nullptr : &d, cfg.twist_grid_n, e_max);
    PerRealization out;
    std::map<std::size_t, std::optional<int>> by_filling;
    for (double e : energies) {
      std::optional<int> c;
      try {
        const std::size_t f = torus.filling(e);
        auto it = by_filling.find(f);
        if (it == by_filling.end()) {
          std::optional<int> value;
          try {
            value = torus.chern_of_filling(f, e).chern;
          } catch (const GapClosingError&) {
          }
          it = by_filling.emplace(f, value).first;
        }
        c = it->second;
      } catch (const NumericalError&) {
      }
      out.chern.push_back(c);
    }
    if (cfg.keep_states) {
      const auto& z = torus.at(0, 0);
      out.states.levels.assign(z.values.data(), z.values.data() + z.values.size());
      for (Eigen::Index k = 0; k < z.vectors.cols(); ++k) out.states.iprs.push_back(ipr(z.vectors.col(k)));
    }
    return out;
  });

  HallCurve curve;
  curve.lambda = spec.lambda;
  curve.mixed_threshold = cfg.mixed_threshold;
  for (std::size_t k = 0; k < energies.size(); ++k) {
    HallPoint p;
    p.energy = energies[k];
    Accumulator acc;
    for (const auto& run : runs) {
      if (run.chern[k]) {
        ++p.histogram[*run.chern[k]];
        acc.add(*run.chern[k]);
      } else {
        ++p.n_fail;
      }
    }
    p.n_ok = acc.count();
    p.mean = acc.mean();
    p.stderr_ = acc.stderr_mean();
    curve.points.push_back(std::move(p));
  }
  if (cfg.keep_states)
    for (auto& run : runs) curve.states.push_back(run.states);

  // plateaus: maximal runs of pure points sharing the modal integer
  std::optional<std::size_t> previous;
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    const auto& p = curve.points[k];
    if (p.n_ok == 0 || p.minority_fraction() >= cfg.mixed_threshold) continue;
    if (previous && *previous + 1 == k && curve.plateaus.back().value == p.modal())
      curve.plateaus.back().e_hi = p.energy;
    else
      curve.plateaus.push_back({p.energy, p.energy, p.modal()});
    previous = k;
  }
  for (std::size_t i = 0; i + 1 < curve.plateaus.size(); ++i)
    if (curve.plateaus[i].value != curve.plateaus[i + 1].value)
      curve.jumps.push_back(0.5 * (curve.plateaus[i].e_hi + curve.plateaus[i + 1].e_lo));
  return curve;
}

// ---------------------------------------------------------------------------
// level statistics

struct LevelStatistics {
  double mean_r = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;  // number of ratios
};

/// r_i = min(s_i, s_{i+1}) / max(s_i, s_{i+1}) for consecutive gaps of sorted levels.
inline std::vector<double> gap_ratios(std::vector<double> levels) {
  std::sort(levels.begin(), levels.end());
  std::vector<double> r;
  for (std::size_t i = 0; i + 2 < levels.size(); ++i) {
    const double s1 = levels[i + 1] - levels[i];
    const double s2 = levels[i + 2] - levels[i + 1];
    const double hi = std::max(s1, s2);
    r.push_back(hi > 0.0 ? std::min(s1, s2) / hi : 1.0);
  }
  return r;
}

inline LevelStatistics summarize_ratios(const std::vector<double>& r) {
  Accumulator acc;
  for (double x : r) acc.add(x);
  return {acc.mean(), acc.stderr_mean(), acc.count()};
}

inline LevelStatistics level_statistics(const std::vector<double>& levels) {
  if (levels.size() < 20) throw SpecError("level_statistics: need at least 20 eigenvalues, got " + std::to_string(levels.size()));
  return summarize_ratios(gap_ratios(levels));
}

/// Poisson value 2 ln 2 - 1 of the mean gap ratio.
inline double poisson_mean_r() { return 2.0 * std::log(2.0) - 1.0; }

// ---------------------------------------------------------------------------
// mobility window

struct MobilityEdgeEstimate {
  int band = 1;
  double lambda = 0.0;
  double e1 = 0.0;
  double e2 = 0.0;
  double e1_err = 0.0;
  double e2_err = 0.0;
  std::string diagnostic = "chern_jump";
  bool clean_flagged = false;  // lambda = 0: whole band delocalized, no edge
  double band_center = 0.0;    // clean band centroid
  double band_lo = 0.0;
  double band_hi = 0.0;
  // cross-checks at zero twist, pooled over realizations
  LevelStatistics r_inside;
  LevelStatistics r_outside;
  double ipr_inside = 0.0;
  double ipr_outside = 0.0;

  double width() const noexcept { return e2 - e1; }
  double center() const noexcept { return 0.5 * (e1 + e2); }
};

struct MobilityScanConfig {
  int twist_grid_n = 6;
  double energy_step = 0.01;
  double mixed_threshold = 0.1;
  std::size_t workers = 1;
};

/// Mixed-Chern window of band `band_n` (1-based) for each lambda, scanned on
/// the band's clean window widened by half of each adjacent gap.
inline std::vector<MobilityEdgeEstimate> mobility_edge_scan(const ModelSpec& spec, const Measure& measure, int band_n,
                                                            const std::vector<double>& lambda_grid,
                                                            std::size_t n_realizations, std::uint64_t seed,
                                                            const MobilityScanConfig& cfg = {},
                                                            std::vector<HallCurve>* curves = nullptr) {
  spec.validate();
  const auto bands = clean_band_structure(spec, twist_samples_for(spec));
  if (band_n < 1 || static_cast<std::size_t>(band_n) > bands.size())
    throw SpecError("mobility_edge_scan: band index out of range");
  if (!(cfg.energy_step > 0.0)) throw SpecError("mobility_edge_scan: energy_step must be > 0");
  const auto& band = bands[static_cast<std::size_t>(band_n - 1)];
  const double gap_above = static_cast<std::size_t>(band_n) < bands.size() ? bands[band_n].lo - band.hi : 0.0;
  const double gap_below = band_n > 1 ? band.lo - bands[band_n - 2].hi : gap_above;
  const double lo = band.lo - 0.5 * gap_below;
  const double hi = band.hi + 0.5 * (gap_above > 0.0 ? gap_above : gap_below);
  std::vector<double> energies;
  for (int k = 0;; ++k) {
    const double e = lo + k * cfg.energy_step;
    if (e > hi + 1e-12) break;
    energies.push_back(e);
  }

  std::vector<MobilityEdgeEstimate> out;
  for (double lambda : lambda_grid) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw SpecError("mobility_edge_scan: lambda must lie in (0, 1]");
    MobilityEdgeEstimate est;
    est.band = band_n;
    est.lambda = lambda;
    est.band_center = band.centroid;
    est.band_lo = lo;
    est.band_hi = hi;
    if (lambda == 0.0) {
      est.clean_flagged = true;
      est.diagnostic = "clean_band";
      est.e1 = band.lo;
      est.e2 = band.hi;
      out.push_back(est);
      continue;
    }
    ModelSpec s = spec;
    s.lambda = lambda;
    HallScanConfig hc;
    hc.twist_grid_n = cfg.twist_grid_n;
    hc.workers = cfg.workers;
    hc.mixed_threshold = cfg.mixed_threshold;
    hc.keep_states = true;
    const auto curve = hall_plateau_scan(s, measure, energies, n_realizations, seed, hc);
    const auto& first = curve.points.front();
    const auto& last = curve.points.back();
    if (first.n_ok == 0 || last.n_ok == 0 || first.minority_fraction() >= cfg.mixed_threshold ||
        last.minority_fraction() >= cfg.mixed_threshold || first.modal() == last.modal())
      throw NumericalError("band " + std::to_string(band_n) + " not resolved at lambda = " + brief(lambda) +
                           ": Chern integer not pure and distinct at the window edges");
    std::optional<std::size_t> a;
    std::optional<std::size_t> b;
    for (std::size_t k = 0; k < curve.points.size(); ++k)
      if (curve.points[k].minority_fraction() >= cfg.mixed_threshold || curve.points[k].n_ok == 0) {
        if (!a) a = k;
        b = k;
      }
    if (a) {
      est.e1 = curve.points[*a].energy;
      est.e2 = curve.points[*b].energy;
    } else {
      // no mixed grid point: the jump lies between two adjacent pure points
      std::size_t k = 0;
      while (k + 1 < curve.points.size() && curve.points[k + 1].modal() == first.modal()) ++k;
      est.e1 = est.e2 = 0.5 * (curve.points[k].energy + curve.points[k + 1].energy);
    }
    est.e1_err = est.e2_err = cfg.energy_step;

    std::vector<double> r_in;
    std::vector<double> r_out;
    Accumulator ipr_in;
    Accumulator ipr_out;
    for (const auto& st : curve.states) {
      std::vector<double> inside;
      std::vector<double> outside;
      for (std::size_t k = 0; k < st.levels.size(); ++k) {
        const double e = st.levels[k];
        if (e < lo || e > hi) continue;
        const bool in = e >= est.e1 - 0.5 * cfg.energy_step && e <= est.e2 + 0.5 * cfg.energy_step;
        (in ? inside : outside).push_back(e);
        if (k < st.iprs.size()) (in ? ipr_in : ipr_out).add(st.iprs[k]);
      }
      const auto ri = gap_ratios(inside);
      const auto ro = gap_ratios(outside);
      r_in.insert(r_in.end(), ri.begin(), ri.end());
      r_out.insert(r_out.end(), ro.begin(), ro.end());
    }
    est.r_inside = summarize_ratios(r_in);
    est.r_outside = summarize_ratios(r_out);
    est.ipr_inside = ipr_in.mean();
    est.ipr_outside = ipr_out.mean();
    if (curves) curves->push_back(curve);
    out.push_back(est);
  }
  return out;
}

inline void write_mobility_csv(std::ostream& os, const std::vector<MobilityEdgeEstimate>& edges) {
  CsvWriter csv(os);
  csv.header({"lambda", "E1", "E2", "width", "diagnostic", "E1_err", "E2_err", "band_center", "r_inside", "r_outside",
              "ipr_inside", "ipr_outside"});
  for (const auto& e : edges)
    csv.row(e.lambda, e.e1, e.e2, e.width(), e.diagnostic, e.e1_err, e.e2_err, e.band_center, e.r_inside.mean_r,
            e.r_outside.mean_r, e.ipr_inside, e.ipr_outside);
}

/// Recorded with every topology report.
inline const char* lattice_caveat() {
  return "lattice torus: the subband Chern numbers sum to zero, forcing a negative-Chern band near the spectrum top "
         "that has no continuum counterpart; experiments target the lowest bands";
}

}  // namespace landau
