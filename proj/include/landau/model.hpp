#pragma once

// Finite-volume magnetic lattice Hamiltonians on an L x L torus (or open
// box): Peierls phases in Landau gauge plus an on-site random potential.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "landau/common.hpp"
#include "landau/measures.hpp"
#include "landau/stats.hpp"

namespace landau {

struct ModelSpec {
  int L = 0;
  int flux_p = 0;
  int flux_q = 1;
  double lambda = 0.0;
  double alpha = 2.0;
  double hopping = 1.0;
  double onsite_shift = 4.0;

  double flux() const noexcept { return static_cast<double>(flux_p) / static_cast<double>(flux_q); }
  /// Field per unit cell, 2 pi p / q.
  double effective_field() const noexcept { return 2.0 * pi * flux(); }
  std::size_t sites() const noexcept { return static_cast<std::size_t>(L) * static_cast<std::size_t>(L); }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (L < 2) out.emplace_back("L must be >= 2");
    if (flux_q < 1) out.emplace_back("flux_q must be >= 1");
    if (flux_p < 0 || (flux_q >= 1 && flux_p >= flux_q && !(flux_p == 0 && flux_q == 1)))
      out.emplace_back("flux must satisfy 0 <= flux_p/flux_q < 1");
    if (flux_q >= 1 && std::gcd(flux_p, flux_q) != 1) out.emplace_back("flux_p and flux_q must be coprime");
    if (L >= 1 && flux_q >= 1 && L % flux_q != 0) out.emplace_back("L must be divisible by flux_q");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) out.emplace_back("lambda must be >= 0");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) out.emplace_back("alpha must be > 0");
    if (!(hopping > 0.0) || !std::isfinite(hopping)) out.emplace_back("hopping must be > 0");
    if (!std::isfinite(onsite_shift)) out.emplace_back("onsite_shift must be finite");
    return out;
  }

  void validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid ModelSpec: ";
    for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? "; " : "") + v[i];
    throw SpecError(msg);
  }

  bool operator==(const ModelSpec&) const = default;
};

struct DisorderRealization {
  std::vector<double> omegas;
  std::uint64_t seed = 0;
  double alpha = 0.0;
};

/// n i.i.d. draws from any supported measure; empirical measures are
/// resampled with replacement.
inline std::vector<double> sample_measure(const Measure& measure, Rng& rng, std::size_t n) {
  struct Visitor {
    Rng& rng;
    std::size_t n;
    std::vector<double> operator()(const StretchedExpMeasure& m) const { return m.sample(rng, n); }
    std::vector<double> operator()(const UniformMeasure& m) const {
      std::uniform_real_distribution<double> u(m.lo, m.hi);
      std::vector<double> out(n);
      for (auto& x : out) x = u(rng);
      return out;
    }
    std::vector<double> operator()(const PointMass& m) const { return std::vector<double>(n, m.at); }
    std::vector<double> operator()(const EmpiricalMeasure& m) const {
      std::uniform_int_distribution<std::size_t> pick(0, m.count() - 1);
      std::vector<double> out(n);
      for (auto& x : out) x = m.samples()[pick(rng)];
      return out;
    }
  };
  return std::visit(Visitor{rng, n}, measure);
}

inline double measure_alpha(const Measure& measure) {
  if (const auto* m = std::get_if<StretchedExpMeasure>(&measure)) return m->alpha();
  return std::numeric_limits<double>::quiet_NaN();
}

inline DisorderRealization draw_disorder(const ModelSpec& spec, const Measure& measure, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed);
  return {sample_measure(measure, rng, spec.sites()), seed, measure_alpha(measure)};
}

/// Draw from the stretched-exponential law with the model's alpha.
inline DisorderRealization draw_disorder(const ModelSpec& spec, std::uint64_t seed) {
  return draw_disorder(spec, Measure{StretchedExpMeasure(spec.alpha)}, seed);
}

/// Boundary phases e^{i theta} on links that wrap around the torus.
struct Twist {
  double theta1 = 0.0;
  double theta2 = 0.0;
};

enum class Boundary { periodic, open };

class HermitianOperator {
 public:
  using Sparse = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

  HermitianOperator(Sparse matrix, ModelSpec spec, std::optional<std::uint64_t> seed = {},
                    Boundary boundary = Boundary::periodic, Twist twist = {})
      : matrix_(std::move(matrix)), spec_(spec), seed_(seed), boundary_(boundary), twist_(twist) {
    matrix_.makeCompressed();
    if (matrix_.rows() != matrix_.cols()) throw SpecError("operator must be square");
    if (!is_exactly_hermitian()) throw SpecError("operator is not exactly Hermitian");
  }

  /// Wrap an arbitrary (exactly Hermitian) dense matrix.
  static HermitianOperator from_dense(const Eigen::MatrixXcd& dense) {
    Sparse s = dense.sparseView(0.0, 0.0);
    return HermitianOperator(std::move(s), ModelSpec{});
  }

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  const Sparse& matrix() const noexcept { return matrix_; }
  Eigen::MatrixXcd dense() const { return Eigen::MatrixXcd(matrix_); }
  const ModelSpec& spec() const noexcept { return spec_; }
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }
  Boundary boundary() const noexcept { return boundary_; }
  Twist twist() const noexcept { return twist_; }

  bool is_exactly_hermitian() const {
    Sparse adj = matrix_.adjoint();
    if (adj.nonZeros() != matrix_.nonZeros()) return false;
    for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
      Sparse::InnerIterator a(matrix_, r);
      Sparse::InnerIterator b(adj, r);
      for (; a && b; ++a, ++b) {
        if (a.col() != b.col() || a.value() != b.value()) return false;
      }
      if (a || b) return false;
    }
    return true;
  }

  /// Rigorous spectral enclosure from Gershgorin discs.
  std::pair<double, double> gershgorin_bounds() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
      double diag = 0.0;
      double radius = 0.0;
      for (Sparse::InnerIterator it(matrix_, r); it; ++it) {
        if (it.col() == r) diag = it.value().real();
        else radius += std::abs(it.value());
      }
      lo = std::min(lo, diag - radius);
      hi = std::max(hi, diag + radius);
    }
    return {lo, hi};
  }

 private:
  Sparse matrix_;
  ModelSpec spec_;
  std::optional<std::uint64_t> seed_;
  Boundary boundary_;
  Twist twist_;
};

inline std::size_t site_index(int L, int x1, int x2) noexcept {
  return static_cast<std::size_t>(x1) + static_cast<std::size_t>(L) * static_cast<std::size_t>(x2);
}

namespace detail {

inline HermitianOperator assemble(const ModelSpec& spec, const std::vector<double>* potential,
                                  std::optional<std::uint64_t> seed, Twist twist, Boundary boundary) {
  spec.validate();
  const int L = spec.L;
  const double t = spec.hopping;
  const double phi = spec.flux();
  std::vector<Eigen::Triplet<cplx>> triplets;
  triplets.reserve(5 * spec.sites());
  auto link = [&](std::size_t from, std::size_t to, cplx amp) {
    triplets.emplace_back(static_cast<int>(to), static_cast<int>(from), amp);
    triplets.emplace_back(static_cast<int>(from), static_cast<int>(to), std::conj(amp));
  };
  const cplx twist1 = std::polar(1.0, twist.theta1);
  const cplx twist2 = std::polar(1.0, twist.theta2);
  for (int x2 = 0; x2 < L; ++x2) {
    // reduce p*x2 mod q before taking the phase: exact periodicity in x2
    const long phase_num = (static_cast<long>(spec.flux_p) * x2) % spec.flux_q;
    const cplx peierls = std::polar(1.0, 2.0 * pi * static_cast<double>(phase_num) / spec.flux_q);
    for (int x1 = 0; x1 < L; ++x1) {
      const std::size_t i = site_index(L, x1, x2);
      double diag = spec.onsite_shift;
      if (potential) diag += spec.lambda * (*potential)[i];
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), cplx(diag, 0.0));

      const bool wrap1 = x1 == L - 1;
      if (!wrap1 || boundary == Boundary::periodic) {
        const cplx amp = -t * peierls * (wrap1 ? twist1 : cplx(1.0));
        link(i, site_index(L, (x1 + 1) % L, x2), amp);
      }
      const bool wrap2 = x2 == L - 1;
      if (!wrap2 || boundary == Boundary::periodic) {
        const cplx amp = -t * (wrap2 ? twist2 : cplx(1.0));
        link(i, site_index(L, x1, (x2 + 1) % L), amp);
      }
    }
  }
  HermitianOperator::Sparse m(static_cast<Eigen::Index>(spec.sites()),
                              static_cast<Eigen::Index>(spec.sites()));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return HermitianOperator(std::move(m), spec, seed, boundary, twist);
}

}  // namespace detail

/// Clean magnetic Laplacian: hops -e^{i 2 pi phi x2} along direction 1,
/// -1 along direction 2, diagonal onsite_shift. Spectrum in [0, 8] for the
/// default shift and unit hopping.
inline HermitianOperator build_clean_hamiltonian(const ModelSpec& spec, Twist twist = {},
                                                 Boundary boundary = Boundary::periodic) {
  return detail::assemble(spec, nullptr, std::nullopt, twist, boundary);
}

/// H0 + lambda diag(omega).
inline HermitianOperator build_random_hamiltonian(const ModelSpec& spec, const DisorderRealization& d,
                                                  Twist twist = {},
                                                  Boundary boundary = Boundary::periodic) {
  if (d.omegas.size() != spec.sites())
    throw SpecError("disorder realization has " + std::to_string(d.omegas.size()) +
                    " sites, model needs " + std::to_string(spec.sites()));
  return detail::assemble(spec, &d.omegas, d.seed, twist, boundary);
}

/// Continuum Landau levels (2n-1) B, n = 1..n_max.
inline std::vector<double> landau_levels(double B, int n_max) {
  if (!(B > 0.0)) throw SpecError("landau_levels: B must be > 0");
  if (n_max < 1) throw SpecError("landau_levels: n_max must be >= 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) out.push_back((2.0 * n - 1.0) * B);
  return out;
}

/// Clean torus spectrum through the exact block reduction of Landau gauge:
/// translation along direction 1 is a symmetry, so each momentum
/// k = (2 pi m - theta1)/L leaves an L x L periodic Harper chain along
/// direction 2. Sorted ascending.
inline std::vector<double> clean_spectrum_by_momentum(const ModelSpec& spec, Twist twist = {}) {
  spec.validate();
  const int L = spec.L;
  const double t = spec.hopping;
  std::vector<double> out;
  out.reserve(spec.sites());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver;
  for (int m = 0; m < L; ++m) {
    const double k = (2.0 * pi * m - twist.theta1) / L;
    Eigen::MatrixXcd chain = Eigen::MatrixXcd::Zero(L, L);
    for (int y = 0; y < L; ++y) {
      const long num = (static_cast<long>(spec.flux_p) * y) % spec.flux_q;
      chain(y, y) += spec.onsite_shift - 2.0 * t * std::cos(2.0 * pi * num / spec.flux_q - k);
      const int next = (y + 1) % L;
      const cplx amp = -t * (y == L - 1 ? std::polar(1.0, twist.theta2) : cplx(1.0));
      chain(next, y) += amp;
      chain(y, next) += std::conj(amp);
    }
    solver.compute(chain, Eigen::EigenvaluesOnly);
    for (Eigen::Index i = 0; i < L; ++i) out.push_back(solver.eigenvalues()(i));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Band {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double centroid = 0.0;
};

/// Split sorted values into clusters separated by gaps larger than `gap_threshold`.
inline std::vector<Band> cluster_bands(const std::vector<double>& sorted, double gap_threshold) {
  std::vector<Band> bands;
  if (sorted.empty()) return bands;
  Band cur{sorted.front(), sorted.front(), 0, 0.0};
  double sum = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i] - sorted[i - 1] > gap_threshold) {
      cur.centroid = sum / static_cast<double>(cur.count);
      bands.push_back(cur);
      cur = Band{sorted[i], sorted[i], 0, 0.0};
      sum = 0.0;
    }
    cur.hi = sorted[i];
    ++cur.count;
    sum += sorted[i];
  }
  cur.centroid = sum / static_cast<double>(cur.count);
  bands.push_back(cur);
  return bands;
}

/// Clean bands as the union of torus spectra over an n x n grid of boundary
/// twists (equivalently a (nL) x (nL) sampling of the magnetic Brillouin
/// zone), clustered at `gap_threshold`.
inline std::vector<Band> clean_band_structure(const ModelSpec& spec, int twist_samples,
                                              double gap_threshold = 0.05) {
  if (twist_samples < 1) throw SpecError("twist_samples must be >= 1");
  std::vector<double> all;
  all.reserve(spec.sites() * static_cast<std::size_t>(twist_samples * twist_samples));
  for (int a = 0; a < twist_samples; ++a) {
    for (int b = 0; b < twist_samples; ++b) {
      const auto ev = clean_spectrum_by_momentum(
          spec, {2.0 * pi * a / twist_samples, 2.0 * pi * b / twist_samples});
      all.insert(all.end(), ev.begin(), ev.end());
    }
  }
  std::sort(all.begin(), all.end());
  auto bands = cluster_bands(all, gap_threshold);
  // report per-torus state counts
  for (auto& band : bands) band.count /= static_cast<std::size_t>(twist_samples * twist_samples);
  return bands;
}

/// Twist-grid size giving an effective (nL)-point momentum sampling of at
/// least `resolution` points per direction.
inline int twist_samples_for(const ModelSpec& spec, int resolution = 240) {
  return std::max(1, (resolution + spec.L - 1) / spec.L);
}

struct SupNormBound {
  double threshold = 0.0;  // (log L)^beta
  ProbabilityEstimate probability;
};

/// P{ max_j |omega_j| <= (log L)^beta } by Monte Carlo, next to the exact
/// product F(t)^{L^2} of the single-site CDF of |omega|.
inline SupNormBound sup_norm_bound_experiment(const ModelSpec& spec, const Measure& measure, double beta,
                                              std::size_t trials, std::uint64_t seed) {
  spec.validate();
  if (trials == 0) throw SpecError("sup_norm_bound_experiment: trials must be >= 1");
  const double t = std::pow(std::log(static_cast<double>(spec.L)), beta);
  const std::size_t n = spec.sites();
  SupNormBound out;
  out.threshold = t;
  Rng rng = make_rng(seed);
  std::size_t hits = 0;
  if (const auto* mu = std::get_if<StretchedExpMeasure>(&measure)) {
    if (!(beta > 1.0 / mu->alpha())) throw SpecError("sup_norm_bound_experiment: beta must exceed 1/alpha");
    const double exact = std::pow(mu->abs_cdf(t), static_cast<double>(n));
    for (std::size_t k = 0; k < trials; ++k) {
      const auto w = mu->sample(rng, n);
      const bool ok = std::all_of(w.begin(), w.end(), [t](double x) { return std::abs(x) <= t; });
      hits += ok ? 1 : 0;
    }
    out.probability = ProbabilityEstimate::from_counts(hits, trials, exact);
  } else if (const auto* point = std::get_if<PointMass>(&measure)) {
    const bool ok = std::abs(point->at) <= t;
    out.probability = ProbabilityEstimate::from_counts(ok ? trials : 0, trials, ok ? 1.0 : 0.0);
  } else {
    throw SpecError("sup_norm_bound_experiment: unsupported measure");
  }
  return out;
}

}  // namespace landau
