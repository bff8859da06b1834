#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "landau/common.hpp"
#include "landau/csv.hpp"
#include "landau/linalg.hpp"
#include "landau/model.hpp"
#include "landau/parallel.hpp"
#include "landau/rng.hpp"
#include "landau/stats.hpp"

namespace landau {

inline constexpr std::size_t default_dense_limit = 4096;

struct SpectrumResult {
  std::vector<double> eigenvalues;               // ascending
  std::optional<Eigen::MatrixXcd> eigenvectors;  // column i pairs with eigenvalues[i]
  ModelSpec spec;
  std::optional<std::uint64_t> seed;
};

inline SpectrumResult full_spectrum(const Eigen::MatrixXcd& h, bool with_vectors = false,
                                    std::size_t dense_limit = default_dense_limit) {
  if (static_cast<std::size_t>(h.rows()) > dense_limit)
    throw SpecError("full_spectrum: dimension " + std::to_string(h.rows()) + " exceeds dense limit " +
                    std::to_string(dense_limit));
  SpectrumResult out;
  if (with_vectors) {
    auto sys = linalg::hermitian_eigensystem(h);
    out.eigenvalues.assign(sys.values.data(), sys.values.data() + sys.values.size());
    out.eigenvectors = std::move(sys.vectors);
  } else {
    const Eigen::VectorXd w = linalg::hermitian_eigenvalues(h);
    out.eigenvalues.assign(w.data(), w.data() + w.size());
  }
  return out;
}

inline SpectrumResult full_spectrum(const HermitianOperator& h, bool with_vectors = false,
                                    std::size_t dense_limit = default_dense_limit) {
  if (h.dimension() > dense_limit)
    throw SpecError("full_spectrum: dimension " + std::to_string(h.dimension()) +
                    " exceeds dense limit " + std::to_string(dense_limit));
  auto out = full_spectrum(h.dense(), with_vectors, dense_limit);
  out.spec = h.spec();
  out.seed = h.seed();
  return out;
}

/// Eigenvalue counts through Sylvester inertia of H - E at a cached dense copy.
class InertiaCounter {
 public:
  explicit InertiaCounter(Eigen::MatrixXcd h) : h_(std::move(h)) {}
  explicit InertiaCounter(const HermitianOperator& h) : h_(h.dense()) {}

  /// #{eigenvalues <= E}. An endpoint that hits a vanishing pivot is moved
  /// up by 1e-12 (relative), at most three times.
  std::size_t count_at_or_below(double e) const {
    if (e == -std::numeric_limits<double>::infinity()) return 0;
    if (e == std::numeric_limits<double>::infinity()) return static_cast<std::size_t>(h_.rows());
    const double unit = 1e-12 * std::max(1.0, std::abs(e));
    for (int attempt = 0; attempt <= 3; ++attempt) {
      if (auto n = linalg::negative_inertia(h_, e + attempt * unit)) return *n;
    }
    throw NumericalError("inertia count: shift " + std::to_string(e) +
                         " stays singular after 3 perturbations");
  }

  /// #{eigenvalues in (a, b]}.
  std::size_t count_in_interval(double a, double b) const {
    if (!(a < b)) throw SpecError("count_in_interval: need a < b");
    const std::size_t hi = count_at_or_below(b);
    const std::size_t lo = count_at_or_below(a);
    return hi - lo;
  }

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(h_.rows()); }

 private:
  Eigen::MatrixXcd h_;
};

inline std::size_t count_in_interval(const HermitianOperator& h, double a, double b) {
  return InertiaCounter(h).count_in_interval(a, b);
}

inline std::size_t count_in_interval(const Eigen::MatrixXcd& h, double a, double b) {
  return InertiaCounter(h).count_in_interval(a, b);
}

/// #{eigenvalues <= e} from a sorted list.
inline std::size_t count_at_or_below(const std::vector<double>& sorted, double e) {
  return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), e) - sorted.begin());
}

/// P = sum over eigenvalues <= E_F of v v^*.
inline Eigen::MatrixXcd fermi_projection(const SpectrumResult& s, double fermi_energy) {
  if (!s.eigenvectors) throw SpecError("fermi_projection needs eigenvectors");
  for (double e : s.eigenvalues) {
    if (std::abs(e - fermi_energy) <= 1e-10)
      throw NumericalError("fermi_projection: Fermi energy sits on an eigenvalue");
  }
  const auto n = static_cast<Eigen::Index>(count_at_or_below(s.eigenvalues, fermi_energy));
  const auto& v = *s.eigenvectors;
  if (n == 0) return Eigen::MatrixXcd::Zero(v.rows(), v.rows());
  const auto occupied = v.leftCols(n);
  return occupied * occupied.adjoint();
}

inline Eigen::MatrixXcd fermi_projection(const HermitianOperator& h, double fermi_energy) {
  return fermi_projection(full_spectrum(h, true), fermi_energy);
}

struct IdsCurve {
  std::vector<double> energies;
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::size_t n_realizations = 0;

  void write_csv(std::ostream& os) const {
    CsvWriter csv(os);
    csv.header({"E", "ids_mean", "ids_stderr", "n_realizations"});
    for (std::size_t i = 0; i < energies.size(); ++i)
      csv.row(energies[i], mean[i], stderr_[i], n_realizations);
  }
};

/// Disorder-averaged integrated density of states per site.
///
/// Each realization's counts come from one dense eigenvalue solve; the
/// count at E is #{eigenvalues <= E} / L^2.
inline IdsCurve ids_estimate(const ModelSpec& spec, const Measure& measure, const std::vector<double>& energies,
                             std::size_t n_realizations, std::uint64_t base_seed, std::size_t workers = 1) {
  spec.validate();
  if (n_realizations == 0) throw SpecError("ids_estimate: n_realizations must be >= 1");
  if (!std::is_sorted(energies.begin(), energies.end())) throw SpecError("ids_estimate: grid must be sorted");
  const double volume = static_cast<double>(spec.sites());
  const auto exp_id = experiment_id("ids");
  auto per_realization = parallel_map(n_realizations, workers, [&](std::size_t r) {
    const auto d = draw_disorder(spec, measure, derive_seed(base_seed, exp_id, r));
    const auto s = full_spectrum(build_random_hamiltonian(spec, d));
    std::vector<double> ids(energies.size());
    for (std::size_t i = 0; i < energies.size(); ++i)
      ids[i] = static_cast<double>(count_at_or_below(s.eigenvalues, energies[i])) / volume;
    return ids;
  });
  IdsCurve curve;
  curve.energies = energies;
  curve.n_realizations = n_realizations;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    Accumulator acc;
    for (const auto& r : per_realization) acc.add(r[i]);
    curve.mean.push_back(acc.mean());
    curve.stderr_.push_back(acc.stderr_mean());
  }
  return curve;
}

namespace detail {

inline double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
  auto it = std::lower_bound(x.begin(), x.end(), at);
  if (it == x.begin()) return y.front();
  if (it == x.end()) return y.back();
  const auto j = static_cast<std::size_t>(it - x.begin());
  if (x[j] == at) return y[j];
  const double w = (at - x[j - 1]) / (x[j] - x[j - 1]);
  return y[j - 1] + w * (y[j] - y[j - 1]);
}

}  // namespace detail

/// max_E [N(E + delta) - N(E)] over the grid (linear interpolation).
inline double ids_modulus(const IdsCurve& curve, double delta) {
  const auto& e = curve.energies;
  if (e.size() < 2) throw SpecError("ids_modulus: need at least two grid points");
  double spacing = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < e.size(); ++i) spacing = std::min(spacing, e[i] - e[i - 1]);
  if (delta < spacing * (1.0 - 1e-12)) throw SpecError("ids_modulus: delta below grid resolution");
  double best = 0.0;
  for (std::size_t i = 0; i < e.size() && e[i] + delta <= e.back() * (1.0 + 1e-15) + 1e-15; ++i) {
    best = std::max(best, detail::interpolate(e, curve.mean, e[i] + delta) - curve.mean[i]);
  }
  return best;
}

struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Least squares of log y against log x; non-positive points are dropped.
inline PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  PowerLawFit fit;
  fit.points = lx.size();
  if (lx.size() < 2) return fit;
  const double n = static_cast<double>(lx.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) return fit;
  fit.exponent = sxy / sxx;
  fit.prefactor = std::exp(my - fit.exponent * mx);
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

/// Hoelder-exponent fit of the IDS modulus of continuity over `deltas`.
inline PowerLawFit hoelder_fit(const IdsCurve& curve, const std::vector<double>& deltas) {
  std::vector<double> moduli;
  moduli.reserve(deltas.size());
  for (double d : deltas) moduli.push_back(ids_modulus(curve, d));
  return fit_power_law(deltas, moduli);
}

}  // namespace landau
