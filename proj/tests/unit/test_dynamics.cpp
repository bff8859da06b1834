#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "landau/dynamics.hpp"
#include "landau/spectral.hpp"
#include "oracles.hpp"

using namespace landau;

namespace {

HermitianOperator disordered(int L, double lambda, std::uint64_t seed, Boundary b = Boundary::periodic) {
  ModelSpec s;
  s.L = L;
  s.flux_p = 1;
  s.flux_q = 4;
  s.lambda = lambda;
  return build_random_hamiltonian(s, draw_disorder(s, seed), {}, b);
}

Eigen::VectorXcd random_unit(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(n));
  for (auto& z : v) z = {g(rng), g(rng)};
  return v.normalized();
}

/// f(H) v through a full eigendecomposition
template <class F>
Eigen::VectorXcd dense_function(const HermitianOperator& h, const Eigen::VectorXcd& v, F&& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
  Eigen::VectorXcd c = es.eigenvectors().adjoint() * v;
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) *= f(es.eigenvalues()(i));
  return es.eigenvectors() * c;
}

}  // namespace

TEST(Filter, ProfileShapeAndSupport) {
  const EnergyFilter f(1.0, 0.5);
  EXPECT_DOUBLE_EQ(f(1.0), 1.0);
  EXPECT_EQ(f(0.5), 0.0);
  EXPECT_EQ(f(1.5), 0.0);
  EXPECT_GT(f(1.45), 0.0);
  for (double e = 0.0; e < 2.0; e += 0.01) {
    EXPECT_GE(f(e), 0.0);
    EXPECT_LE(f(e), 1.0);
  }
  EXPECT_THROW(EnergyFilter(0.0, 0.0), SpecError);
}

TEST(Filter, ExpansionErrorBelowTolerance) {
  const EnergyFilter f(2.0, 0.4);
  const auto ex = expand_filter(f, -1.0, 9.0);
  EXPECT_LE(ex.max_error, 1e-8);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 9.0);
  for (int i = 0; i < 2000; ++i) {
    const double e = u(rng);
    EXPECT_NEAR(ex.evaluate(e), f(e), 1e-8);
  }
}

TEST(Filter, MatchesDenseOracle) {
  const auto h = disordered(8, 0.7, 3);
  const EnergyFilter f(1.3, 0.6);
  for (std::uint64_t s : {1u, 2u, 3u}) {
    const auto v = random_unit(64, s);
    const auto w = apply_filter(h, f, v);
    EXPECT_FALSE(w.disjoint);
    EXPECT_LE((w.vector - dense_function(h, v, f)).norm(), 1e-6);
  }
}

TEST(Filter, EigenvectorIsScaled) {
  const auto h = disordered(8, 0.5, 4);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
  const EnergyFilter f(es.eigenvalues()(5) + 0.1, 0.4);
  const Eigen::VectorXcd v = es.eigenvectors().col(5);
  const auto w = apply_filter(h, f, v);
  EXPECT_LE((w.vector - f(es.eigenvalues()(5)) * v).norm(), 1e-8);
}

TEST(Filter, WideFilterIsIdentity) {
  const auto h = disordered(8, 0.5, 5);
  const auto v = random_unit(64, 9);
  const auto w = apply_filter(h, EnergyFilter(4.0, 1e4), v);
  EXPECT_LE((w.vector - v).norm(), 1e-6);
}

TEST(Filter, DisjointSupportIsFlagged) {
  const auto h = disordered(8, 0.5, 5);
  const auto w = apply_filter(h, EnergyFilter(100.0, 1.0), random_unit(64, 1));
  EXPECT_TRUE(w.disjoint);
  EXPECT_EQ(w.vector.norm(), 0.0);
}

TEST(Filter, SquaredFilterConsistency) {
  // applying X twice equals X^2(H) from the oracle
  const auto h = disordered(8, 0.6, 6);
  const EnergyFilter f(1.0, 0.8);
  const auto v = random_unit(64, 4);
  const auto twice = apply_filter(h, f, apply_filter(h, f, v).vector).vector;
  const auto exact = dense_function(h, v, [&](double e) { return f(e) * f(e); });
  EXPECT_LE((twice - exact).norm(), 1e-6);
}

TEST(Evolve, MatchesDenseOracle) {
  const auto h = disordered(8, 0.8, 7);
  const auto v = random_unit(64, 5);
  for (double t : {0.5, 10.0, 100.0}) {
    const auto exact = dense_function(h, v, [t](double e) { return std::polar(1.0, -e * t); });
    EXPECT_LE((evolve(h, v, t) - exact).norm(), 1e-8) << "t=" << t;
  }
}

TEST(Evolve, EigenvectorPicksUpPhase) {
  const auto h = disordered(8, 0.3, 8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
  const Eigen::VectorXcd v = es.eigenvectors().col(17);
  const double e = es.eigenvalues()(17);
  EXPECT_LE((evolve(h, v, 37.0) - std::polar(1.0, -e * 37.0) * v).norm(), 1e-9);
}

TEST(Evolve, Unitarity) {
  const auto h = disordered(8, 1.0, 9);
  const auto v = random_unit(64, 6);
  EXPECT_NEAR(evolve(h, v, 100.0).norm(), 1.0, 1e-10);
  EXPECT_EQ((evolve(h, v, 0.0) - v).norm(), 0.0);
  EXPECT_THROW(evolve(h, v, -1.0), SpecError);
}

TEST(Moment, TimeZeroIsDirect) {
  ModelSpec s;
  s.L = 30;
  s.flux_p = 1;
  s.flux_q = 5;
  s.lambda = 0.3;
  MomentConfig cfg;
  cfg.n_realizations = 3;
  const EnergyFilter f(1.1, 0.4);
  const auto rec = moment(s, StretchedExpMeasure(2.0), f, {0.0, 1.0}, cfg);
  const LatticeGeometry geo(30);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto h = build_random_hamiltonian(s, draw_disorder(s, Measure{StretchedExpMeasure(2.0)}, rec.seeds[r]), {},
                                            Boundary::open);
    Eigen::VectorXcd chi = Eigen::VectorXcd::Zero(900);
    chi(static_cast<Eigen::Index>(site_index(30, 15, 15))) = 1.0;
    EXPECT_EQ(rec.samples[r][0], geo.moment(apply_filter(h, f, chi).vector, 2.0));
  }
}

TEST(Moment, ZerothMomentIsConserved) {
  ModelSpec s;
  s.L = 28;
  s.flux_p = 1;
  s.flux_q = 4;
  s.lambda = 1.0;
  MomentConfig cfg;
  cfg.p = 0.0;
  cfg.n_realizations = 2;
  const auto rec = moment(s, StretchedExpMeasure(2.0), EnergyFilter(4.0, 1e4), {0.0, 0.5, 1.0}, cfg);
  for (double m : rec.m_mean) EXPECT_NEAR(m, 1.0, 1e-6);
}

TEST(Moment, NondecreasingInP) {
  ModelSpec s;
  s.L = 32;
  s.flux_p = 1;
  s.flux_q = 4;
  s.lambda = 0.5;
  MomentConfig cfg;
  cfg.n_realizations = 2;
  std::vector<std::vector<std::vector<double>>> by_p;
  for (double p : {0.0, 1.0, 2.0, 3.5}) {
    cfg.p = p;
    by_p.push_back(moment(s, StretchedExpMeasure(2.0), EnergyFilter(1.2, 0.5), {0.0, 2.0, 4.0}, cfg).samples);
  }
  for (std::size_t k = 1; k < by_p.size(); ++k)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t t = 0; t < 3; ++t) EXPECT_GE(by_p[k][r][t], by_p[k - 1][r][t]);
}

TEST(Moment, BoundaryLeakIsReported) {
  ModelSpec s;
  s.L = 14;
  s.flux_p = 1;
  s.flux_q = 2;
  MomentConfig cfg;
  cfg.n_realizations = 1;
  try {
    moment(s, StretchedExpMeasure(2.0), EnergyFilter(4.0, 3.0), {0.0, 0.5, 1.0, 50.0}, cfg);
    FAIL() << "expected a boundary leak";
  } catch (const BoundaryLeakError& e) {
    EXPECT_LT(e.max_admissible_time(), 50.0);
  }
}

TEST(Moment, CleanBandSpreadsBallistically) {
  ModelSpec s;
  s.L = 60;
  s.flux_p = 1;
  s.flux_q = 5;
  MomentConfig cfg;
  cfg.n_realizations = 1;
  std::vector<double> t{0.0};
  for (int k = 5; k <= 20; ++k) t.push_back(k);
  const auto rec = moment(s, StretchedExpMeasure(2.0), EnergyFilter(1.064, 0.2), t, cfg);
  std::vector<double> ts;
  std::vector<double> growth;
  for (std::size_t k = 1; k < t.size(); ++k) {
    ts.push_back(t[k]);
    growth.push_back(rec.m_mean[k] - rec.m_mean[0]);
  }
  const auto fit = fit_power_law(ts, growth);
  EXPECT_GE(fit.exponent, 1.8);
  EXPECT_LE(fit.exponent, 2.0 + 1e-9);
  EXPECT_LT(rec.max_leakage, leakage_tolerance);
}

TEST(TimeAverage, ConstantAndLinearAnalytic) {
  const auto t = log_time_grid(1e-3, 1e4, 40);
  std::vector<double> c(t.size(), 3.0);
  std::vector<double> lin(t);
  for (double T : {1.0, 50.0, 500.0}) {
    EXPECT_NEAR(laplace_average(t, c, T), 3.0 * (1.0 - std::exp(-10.0)), 1e-12);
    EXPECT_NEAR(laplace_average(t, lin, T), T * (1.0 - 11.0 * std::exp(-10.0)), 1e-9 * T);
  }
}

TEST(TimeAverage, RecordAugmentation) {
  TransportRecord rec;
  rec.t_grid = log_time_grid(0.1, 100.0, 40);
  rec.samples = {std::vector<double>(rec.t_grid.size(), 2.0), std::vector<double>(rec.t_grid.size(), 4.0)};
  rec.m_mean.assign(rec.t_grid.size(), 3.0);
  rec.m_stderr.assign(rec.t_grid.size(), 1.0);
  const auto out = time_averaged_moment(rec, {1.0, 10.0});
  ASSERT_EQ(out.tam_mean.size(), 2u);
  EXPECT_NEAR(out.tam_mean[1], 3.0 * (1.0 - std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(out.tam_stderr[1], 1.0 * (1.0 - std::exp(-10.0)), 1e-12);
  EXPECT_THROW(time_averaged_moment(rec, {20.0}), SpecError);
}

TEST(TimeGrid, DensityPerDecade) {
  const auto t = log_time_grid(0.1, 1000.0, 40);
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_NEAR(t.back(), 1000.0, 1e-9);
  EXPECT_GE(t.size(), 161u);
}
