#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "landau/model.hpp"
#include "landau/spectral.hpp"
#include "oracles.hpp"

using namespace landau;

namespace {

ModelSpec spec_of(int L, int p, int q, double lambda = 0.0, double alpha = 2.0) {
  ModelSpec s;
  s.L = L;
  s.flux_p = p;
  s.flux_q = q;
  s.lambda = lambda;
  s.alpha = alpha;
  return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(ModelSpec, RejectsIncommensurateLattice) {
  auto s = spec_of(10, 1, 3);
  EXPECT_THROW(build_clean_hamiltonian(s), SpecError);
  const auto v = s.violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "L must be divisible by flux_q");
}

TEST(ModelSpec, RejectsNonCoprimeFlux) {
  EXPECT_THROW(build_clean_hamiltonian(spec_of(12, 2, 4)), SpecError);
  EXPECT_THROW(build_clean_hamiltonian(spec_of(12, 0, 4)), SpecError);
}

TEST(ModelSpec, RejectsNegativeLambdaAndAlpha) {
  auto s = spec_of(6, 1, 3, -0.1);
  EXPECT_FALSE(s.violations().empty());
  s.lambda = 0.1;
  s.alpha = 0.0;
  EXPECT_FALSE(s.violations().empty());
}

TEST(CleanHamiltonian, ZeroFluxMatchesCosineFormula) {
  const auto h = build_clean_hamiltonian(spec_of(4, 0, 1));
  std::vector<double> expected;
  for (int k1 = 0; k1 < 4; ++k1)
    for (int k2 = 0; k2 < 4; ++k2)
      expected.push_back(4.0 - 2.0 * std::cos(2 * pi * k1 / 4) - 2.0 * std::cos(2 * pi * k2 / 4));
  std::sort(expected.begin(), expected.end());
  const auto got = full_spectrum(h).eigenvalues;
  EXPECT_LT(max_abs_diff(got, expected), 1e-10);
  EXPECT_NEAR(got.front(), 0.0, 1e-12);
  EXPECT_NEAR(got.back(), 8.0, 1e-12);
}

TEST(CleanHamiltonian, ExactlyHermitianWithAtMostFiveEntriesPerRow) {
  for (int L : {2, 3, 6, 10}) {
    for (auto [p, q] : {std::pair{0, 1}, std::pair{1, 2}, std::pair{1, 3}}) {
      if (L % q) continue;
      const auto h = build_clean_hamiltonian(spec_of(L, p, q), {0.3, 1.1});
      EXPECT_TRUE(h.is_exactly_hermitian());
      for (Eigen::Index r = 0; r < h.matrix().outerSize(); ++r)
        EXPECT_LE(h.matrix().innerVector(r).nonZeros(), 5);
    }
  }
}

TEST(CleanHamiltonian, SpectrumWithinZeroToEight) {
  const auto ev = full_spectrum(build_clean_hamiltonian(spec_of(10, 1, 5))).eigenvalues;
  EXPECT_GE(ev.front(), -1e-12);
  EXPECT_LE(ev.back(), 8.0 + 1e-12);
}

TEST(CleanHamiltonian, MomentumReductionMatchesDenseSolve) {
  for (auto [L, p, q] : {std::tuple{6, 1, 3}, std::tuple{10, 1, 5}, std::tuple{10, 2, 5}}) {
    const auto s = spec_of(L, p, q);
    const Twist tw{0.7, -1.3};
    const auto dense = full_spectrum(build_clean_hamiltonian(s, tw)).eigenvalues;
    EXPECT_LT(max_abs_diff(dense, clean_spectrum_by_momentum(s, tw)), 1e-10) << L << " " << p << "/" << q;
  }
}

TEST(CleanHamiltonian, FluxOneThirdHasThreeBands) {
  // dense-diagonalization oracle: union of twisted torus spectra
  const auto s = spec_of(6, 1, 3);
  std::vector<double> all;
  const int n = 40;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      auto ev = oracle::eigenvalues(build_clean_hamiltonian(s, {2 * pi * a / n, 2 * pi * b / n}).dense());
      all.insert(all.end(), ev.begin(), ev.end());
    }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(cluster_bands(all, 0.05).size(), 3u);
  EXPECT_EQ(clean_band_structure(s, twist_samples_for(s)).size(), 3u);
}

TEST(CleanHamiltonian, FluxBandingHasQBands) {
  // odd q only: for even q the two central bands touch at Dirac points
  for (int q : {3, 5}) {
    for (int p = 1; p < q; ++p) {
      if (std::gcd(p, q) != 1) continue;
      const auto s = spec_of(6 * q, p, q);
      const auto bands = clean_band_structure(s, twist_samples_for(s));
      EXPECT_EQ(bands.size(), static_cast<std::size_t>(q)) << p << "/" << q;
    }
  }
}

TEST(CleanHamiltonian, WeakFluxClustersMimicLandauLevels) {
  const auto s = spec_of(128, 1, 64);
  const auto ev = clean_spectrum_by_momentum(s);
  const auto bands = cluster_bands(ev, 0.05);
  ASSERT_GE(bands.size(), 4u);
  const double spacing = 2.0 * s.effective_field();
  EXPECT_NEAR(spacing, 4 * pi / 64, 1e-15);
  for (int n = 0; n < 3; ++n) {
    EXPECT_EQ(bands[n].count, s.sites() / 64);
    const double gap = bands[n + 1].centroid - bands[n].centroid;
    EXPECT_LT(std::abs(gap - spacing) / spacing, 0.1) << n;
  }
  // lowest cluster sits near the first level B_1 = B
  EXPECT_LT(std::abs(bands[0].centroid - landau_levels(s.effective_field(), 1)[0]) / s.effective_field(), 0.1);
}

TEST(CleanHamiltonian, GaugeCovariance) {
  const auto s = spec_of(10, 1, 5);
  const auto ours = full_spectrum(build_clean_hamiltonian(s)).eigenvalues;
  EXPECT_LT(max_abs_diff(ours, oracle::eigenvalues(oracle::hofstadter_other_gauge(10, 1, 5))), 1e-10);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2 * pi);
  Eigen::VectorXcd phases(s.sites());
  for (auto& z : phases) z = std::polar(1.0, u(rng));
  const Eigen::MatrixXcd h = build_clean_hamiltonian(s).dense();
  Eigen::MatrixXcd conj = phases.asDiagonal() * h * phases.conjugate().asDiagonal();
  EXPECT_LT(max_abs_diff(ours, oracle::eigenvalues(conj)), 1e-10);
}

TEST(CleanHamiltonian, MagneticTranslationsCommuteExactly) {
  const int L = 12;
  const auto s = spec_of(L, 1, 3);
  const Eigen::MatrixXcd h = build_clean_hamiltonian(s).dense();
  auto permutation = [L](int d1, int d2) {
    Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(L * L, L * L);
    for (int x1 = 0; x1 < L; ++x1)
      for (int x2 = 0; x2 < L; ++x2)
        t(site_index(L, (x1 + d1) % L, (x2 + d2) % L), site_index(L, x1, x2)) = 1.0;
    return t;
  };
  // one site along the gauge-invariant direction, q sites along the other
  for (auto [d1, d2] : {std::pair{1, 0}, std::pair{0, 3}}) {
    const Eigen::MatrixXcd t = permutation(d1, d2);
    EXPECT_EQ((t * h * t.transpose() - h).cwiseAbs().maxCoeff(), 0.0);
  }
  // one site along direction 2 needs the compensating gauge phase e^{i 2 pi phi x1}
  const Eigen::MatrixXcd t = permutation(0, 1);
  Eigen::VectorXcd g(L * L);
  for (int x1 = 0; x1 < L; ++x1)
    for (int x2 = 0; x2 < L; ++x2) g(site_index(L, x1, x2)) = std::polar(1.0, 2 * pi * x1 / 3.0);
  const Eigen::MatrixXcd m = g.asDiagonal() * t;
  EXPECT_LT((m * h * m.adjoint() - h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RandomHamiltonian, ZeroLambdaIsTheCleanMatrix) {
  const auto s = spec_of(6, 1, 3, 0.0);
  const auto d = draw_disorder(s, 11);
  const Eigen::MatrixXcd a = build_random_hamiltonian(s, d).dense();
  const Eigen::MatrixXcd b = build_clean_hamiltonian(s).dense();
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RandomHamiltonian, DiagonalIsShiftPlusLambdaOmegaExactly) {
  const auto s = spec_of(6, 1, 3, 0.37, 1.3);
  const auto d = draw_disorder(s, 5);
  const auto h = build_random_hamiltonian(s, d);
  EXPECT_TRUE(h.is_exactly_hermitian());
  const Eigen::MatrixXcd m = h.dense();
  for (std::size_t i = 0; i < s.sites(); ++i) {
    EXPECT_EQ(m(i, i).real(), s.onsite_shift + s.lambda * d.omegas[i]);
    EXPECT_EQ(m(i, i).imag(), 0.0);
  }
  EXPECT_EQ(h.seed(), std::optional<std::uint64_t>(5));
}

TEST(RandomHamiltonian, ConstantPotentialShiftsSpectrum) {
  const auto s = spec_of(10, 1, 5, 0.25);
  DisorderRealization d{std::vector<double>(s.sites(), 1.5), 0, 2.0};
  const auto clean = full_spectrum(build_clean_hamiltonian(s)).eigenvalues;
  const auto shifted = full_spectrum(build_random_hamiltonian(s, d)).eigenvalues;
  for (std::size_t i = 0; i < clean.size(); ++i) EXPECT_NEAR(shifted[i], clean[i] + 0.375, 1e-12);
}

TEST(RandomHamiltonian, DimensionMismatchRejected) {
  const auto s = spec_of(6, 1, 3, 0.1);
  DisorderRealization d{std::vector<double>(35, 0.0), 0, 2.0};
  EXPECT_THROW(build_random_hamiltonian(s, d), SpecError);
}

TEST(RandomHamiltonian, DisorderFillsCleanGaps) {
  const auto s = spec_of(10, 1, 5, 0.3, 2.0);
  const auto bands = clean_band_structure(s, twist_samples_for(s));
  ASSERT_EQ(bands.size(), 5u);
  auto in_gap = [&](double e) {
    for (std::size_t b = 0; b + 1 < bands.size(); ++b)
      if (e > bands[b].hi && e < bands[b + 1].lo) return true;
    return false;
  };
  bool found = false;
  for (std::uint64_t seed = 7; seed < 57 && !found; ++seed) {
    const auto ev = full_spectrum(build_random_hamiltonian(s, draw_disorder(s, seed))).eigenvalues;
    found = std::any_of(ev.begin(), ev.end(), in_gap);
  }
  EXPECT_TRUE(found);
}

TEST(RandomHamiltonian, WeylBoundOnLowestEigenvalue) {
  const auto s = spec_of(10, 1, 5, 0.4, 1.0);
  const double clean_min = full_spectrum(build_clean_hamiltonian(s)).eigenvalues.front();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = draw_disorder(s, seed);
    double sup = 0.0;
    for (double w : d.omegas) sup = std::max(sup, std::abs(w));
    const double m = full_spectrum(build_random_hamiltonian(s, d)).eigenvalues.front();
    EXPECT_LE(std::abs(m - clean_min), s.lambda * sup + 1e-10);
  }
}

TEST(Disorder, SameSeedSameBits) {
  const auto s = spec_of(12, 1, 3, 0.3, 0.7);
  const auto a = draw_disorder(s, 1234);
  const auto b = draw_disorder(s, 1234);
  ASSERT_EQ(a.omegas.size(), 144u);
  EXPECT_EQ(a.omegas, b.omegas);
  EXPECT_NE(a.omegas, draw_disorder(s, 1235).omegas);
}

TEST(LandauLevels, OddMultiplesOfField) {
  EXPECT_EQ(landau_levels(1.0, 3), (std::vector<double>{1.0, 3.0, 5.0}));
  EXPECT_EQ(landau_levels(2.0, 1), (std::vector<double>{2.0}));
  EXPECT_EQ(landau_levels(0.5, 4), (std::vector<double>{0.5, 1.5, 2.5, 3.5}));
  EXPECT_THROW(landau_levels(0.0, 2), SpecError);
  EXPECT_THROW(landau_levels(1.0, 0), SpecError);
}

TEST(SupNormBound, MonteCarloMatchesClosedForm) {
  const auto s = spec_of(16, 0, 1, 0.0, 2.0);
  const auto r = sup_norm_bound_experiment(s, StretchedExpMeasure(2.0), 1.0, 4000, 99);
  // closed form: erf(log 16)^{256}
  EXPECT_NEAR(r.probability.exact, std::pow(std::erf(std::log(16.0)), 256.0), 1e-12);
  EXPECT_TRUE(r.probability.matches_exact(3.0)) << r.probability.estimate << " vs " << r.probability.exact;
}

TEST(SupNormBound, PointMassAndLargeBeta) {
  const auto s = spec_of(16, 0, 1, 0.0, 2.0);
  EXPECT_EQ(sup_norm_bound_experiment(s, PointMass{0.0}, 0.1, 10, 1).probability.estimate, 1.0);
  const auto r = sup_norm_bound_experiment(s, StretchedExpMeasure(2.0), 10.0, 200, 3);
  EXPECT_GE(r.probability.exact, 0.999);
  EXPECT_THROW(sup_norm_bound_experiment(s, StretchedExpMeasure(2.0), 0.4, 10, 1), SpecError);
  EXPECT_THROW(sup_norm_bound_experiment(s, StretchedExpMeasure(2.0), 1.0, 0, 1), SpecError);
}
