#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "landau/measures.hpp"
#include "oracles.hpp"

using namespace landau;

namespace {

/// Tail cutoff where exp(-|w|^alpha) < 1e-20.
double support_cutoff(double alpha) { return std::pow(46.0, 1.0 / alpha); }

/// Brute-force sup over window positions of a quadrature window mass.
template <class Density>
double brute_window_sup(Density&& f, double s, double lo, double hi, int steps) {
  double best = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double a = lo + (hi - lo) * i / steps;
    best = std::max(best, oracle::integrate(f, a, a + s));
  }
  return best;
}

}  // namespace

TEST(StretchedExp, NormalizationMatchesQuadrature) {
  for (double alpha : {0.5, 0.7, 1.0, 2.0, 3.0}) {
    StretchedExpMeasure m(alpha);
    EXPECT_NEAR(m.rho0(), alpha / (2.0 * std::tgamma(1.0 / alpha)), 1e-15);
    const double cut = support_cutoff(alpha);
    const double total = 2.0 * oracle::integrate([&](double w) { return m.density(w); }, 0.0, cut);
    EXPECT_NEAR(total, 1.0, 1e-10) << alpha;
  }
}

TEST(StretchedExp, DensityValues) {
  const double gaussian_norm =
      2.0 * oracle::integrate([](double w) { return std::exp(-w * w); }, 0.0, support_cutoff(2.0));
  EXPECT_NEAR(StretchedExpMeasure(2.0).density(0.0), 1.0 / gaussian_norm, 1e-12);
  EXPECT_NEAR(StretchedExpMeasure(2.0).density(0.0), 1.0 / std::sqrt(pi), 1e-15);
  EXPECT_NEAR(StretchedExpMeasure(1.0).density(0.0), 0.5, 1e-15);
  for (double alpha : {0.5, 1.0, 2.5}) {
    StretchedExpMeasure m(alpha);
    for (double w : {0.1, 1.3, 7.0}) {
      EXPECT_EQ(m.density(w), m.density(-w));
      EXPECT_GT(m.density(w), 0.0);
    }
  }
  EXPECT_THROW(StretchedExpMeasure(0.0), SpecError);
}

TEST(StretchedExp, GaussianSecondMoment) {
  StretchedExpMeasure m(2.0);
  const auto w = m.sample(42, 1'000'000);
  double s2 = 0.0;
  double s4 = 0.0;
  for (double x : w) {
    s2 += x * x;
    s4 += x * x * x * x;
  }
  const double n = static_cast<double>(w.size());
  const double mean = s2 / n;
  // Var(w^2) = E w^4 - (E w^2)^2 = 3/4 - 1/4
  const double se = std::sqrt(0.5 / n);
  EXPECT_LT(std::abs(mean - 0.5), 3.0 * se);
  EXPECT_NEAR(m.abs_moment(2.0), 0.5, 1e-14);
}

TEST(StretchedExp, MedianNearZero) {
  for (double alpha : {0.7, 1.0, 2.0}) {
    StretchedExpMeasure m(alpha);
    auto w = m.sample(7, 200'001);
    std::nth_element(w.begin(), w.begin() + 100'000, w.end());
    const double median = w[100'000];
    const double se = 1.0 / (2.0 * m.density(0.0) * std::sqrt(200'001.0));
    EXPECT_LT(std::abs(median), 3.0 * se) << alpha;
  }
}

TEST(StretchedExp, ExponentialTail) {
  StretchedExpMeasure m(1.0);
  const auto w = m.sample(3, 500'000);
  const double hits = static_cast<double>(std::count_if(w.begin(), w.end(), [](double x) { return std::abs(x) > 2.0; }));
  const double p = std::exp(-2.0);
  const double n = static_cast<double>(w.size());
  EXPECT_LT(std::abs(hits / n - p), 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(StretchedExp, SamplesRespectTailProbability) {
  for (double alpha : {0.5, 1.0, 2.0}) {
    StretchedExpMeasure m(alpha);
    const auto w = m.sample(100 + static_cast<std::uint64_t>(alpha * 10), 200'000);
    const double n = static_cast<double>(w.size());
    for (double eps : {0.5, 1.0, 2.0}) {
      const double p = m.tail(eps);
      const double hits = static_cast<double>(std::count_if(w.begin(), w.end(), [eps](double x) { return std::abs(x) >= eps; }));
      EXPECT_LT(std::abs(hits / n - p), 3.0 * std::sqrt(p * (1 - p) / n)) << alpha << " " << eps;
    }
  }
}

TEST(StretchedExp, SamplingIsSeedDeterministic) {
  StretchedExpMeasure m(0.7);
  EXPECT_EQ(m.sample(9, 1000), m.sample(9, 1000));
}

TEST(TailProbability, ExactValues) {
  EXPECT_EQ(tail_probability(StretchedExpMeasure(1.3), 0.0).exact, 1.0);
  EXPECT_NEAR(tail_probability(StretchedExpMeasure(1.0), 3.0).exact, std::exp(-3.0), 1e-15);
  StretchedExpMeasure g(2.0);
  const double quad = 2.0 * oracle::integrate([&](double w) { return g.density(w); }, 1.0, support_cutoff(2.0));
  EXPECT_NEAR(tail_probability(g, 1.0).exact, quad, 1e-12);
  EXPECT_NEAR(tail_probability(g, 1.0).exact, std::erfc(1.0), 1e-14);
  EXPECT_THROW(tail_probability(g, -1.0), SpecError);
}

TEST(TailProbability, BoundHoldsAndConstantIsTight) {
  for (double alpha : {0.5, 0.7, 1.0, 2.0, 3.0}) {
    StretchedExpMeasure m(alpha);
    const double c = tail_bound_constant(m);
    EXPECT_GE(c, 1.0);
    double tightest = 0.0;
    for (int i = 0; i <= 4000; ++i) {
      const double eps = 0.005 * i;
      const double bound = c * std::exp(-0.5 * std::pow(eps, alpha));
      EXPECT_LE(m.tail(eps), bound * (1.0 + 1e-12)) << alpha << " " << eps;
      tightest = std::max(tightest, m.tail(eps) / bound);
    }
    const auto t = tail_probability(m, 1.7);
    EXPECT_EQ(t.c_alpha, c);
    EXPECT_NEAR(t.bound, c * std::exp(-0.5 * std::pow(1.7, alpha)), 1e-15);
    EXPECT_GT(tightest, 0.999) << alpha;
  }
}

TEST(Concentration, ReferenceMeasures) {
  for (double s : {0.0, 0.1, 0.5, 1.0}) EXPECT_NEAR(concentration(UniformMeasure{0.0, 1.0}, s), 8.0 * s, 1e-15);
  EXPECT_EQ(concentration(UniformMeasure{0.0, 1.0}, 3.0), 8.0);
  for (double s : {0.0, 0.3, 10.0}) EXPECT_EQ(concentration(PointMass{2.5}, s), 8.0);
  EXPECT_THROW(concentration(PointMass{}, -1.0), SpecError);
}

TEST(Concentration, GaussianUnitWindow) {
  StretchedExpMeasure m(2.0);
  const double brute = brute_window_sup([&](double w) { return m.density(w); }, 1.0, -1.5, 0.5, 400);
  EXPECT_NEAR(concentration(m, 1.0), 8.0 * brute, 1e-9);
  EXPECT_NEAR(concentration(m, 1.0), 8.0 * std::erf(0.5), 1e-14);
}

TEST(Concentration, EmpiricalSlidingWindow) {
  EmpiricalMeasure e({0.0, 0.1, 0.2, 5.0, 5.05});
  EXPECT_NEAR(concentration(e, 0.2), 8.0 * 3 / 5, 1e-15);
  EXPECT_NEAR(concentration(e, 0.05), 8.0 * 2 / 5, 1e-15);
  EXPECT_NEAR(concentration(e, 0.0), 8.0 * 1 / 5, 1e-15);
  EXPECT_THROW(EmpiricalMeasure({}), SpecError);
}

TEST(Concentration, NondecreasingAndSubadditive) {
  StretchedExpMeasure g(2.0);
  EmpiricalMeasure e(StretchedExpMeasure(1.0).sample(5, 5000));
  const Measure measures[] = {g, e, UniformMeasure{-1.0, 2.0}, StretchedExpMeasure(0.6)};
  for (const auto& m : measures) {
    double prev = 0.0;
    for (int i = 0; i <= 60; ++i) {
      const double s = 0.05 * i;
      const double q = concentration(m, s);
      EXPECT_GE(q, prev - 1e-15);
      prev = q;
      for (int j = 0; j <= 60; j += 7) {
        const double t = 0.05 * j;
        EXPECT_LE(concentration(m, s + t), concentration(m, s) + concentration(m, t) + 1e-12);
      }
    }
  }
}

TEST(Concentration, EmpiricalConvergesToAnalytic) {
  StretchedExpMeasure g(2.0);
  EmpiricalMeasure e(g.sample(2024, 100'000));
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double s = 0.04 * i;
    worst = std::max(worst, std::abs(concentration(e, s) - concentration(g, s)));
  }
  EXPECT_LE(worst, 5e-2);
}

TEST(ModifiedConcentration, ZeroOrderIsPlainConcentration) {
  StretchedExpMeasure m(1.5);
  for (double s : {0.0, 0.2, 1.0, 4.0}) EXPECT_EQ(modified_concentration(m, 0.0, s), concentration(m, s));
}

TEST(ModifiedConcentration, ZeroWindow) {
  StretchedExpMeasure m(2.0);
  for (double q : {0.5, 2.0, 4.0}) EXPECT_EQ(modified_concentration(m, q, 0.0), 0.0);
}

TEST(ModifiedConcentration, SmallWindowSlopeIsPeakDensity) {
  StretchedExpMeasure m(2.0);
  const double s = 1e-4;
  const double expected = 8.0 * std::exp(-1.0) / std::sqrt(pi);
  EXPECT_NEAR(modified_concentration(m, 2.0, s) / s, expected, 1e-6);
}

TEST(ModifiedConcentration, MatchesBruteForceQuadrature) {
  for (double alpha : {0.7, 1.0, 2.0}) {
    StretchedExpMeasure m(alpha);
    for (double q : {1.0, 2.0, 4.0}) {
      for (double s : {0.05, 0.5, 2.0}) {
        auto f = [&](double t) { return std::pow(std::abs(t), q) * m.density(t); };
        const double peak = std::pow(q / alpha, 1.0 / alpha);
        const double brute = brute_window_sup(f, s, -0.5 * s, peak + 0.1, 2000);
        const double got = modified_concentration(m, q, s);
        EXPECT_GE(got, 8.0 * brute - 1e-9);
        EXPECT_NEAR(got, 8.0 * brute, 1e-4 * got) << alpha << " " << q << " " << s;
      }
    }
  }
}

TEST(ModifiedConcentration, MonotoneInWindowAndContinuousInOrder) {
  StretchedExpMeasure m(2.0);
  for (double q : {1.0, 2.0, 4.0}) {
    double prev = 0.0;
    for (int i = 0; i <= 50; ++i) {
      const double v = modified_concentration(m, q, 0.1 * i);
      EXPECT_GE(v, prev - 1e-12);
      prev = v;
    }
  }
  for (double s : {0.1, 1.0}) {
    for (int i = 0; i < 40; ++i) {
      const double q = 0.1 * i;
      EXPECT_LT(std::abs(modified_concentration(m, q + 1e-4, s) - modified_concentration(m, q, s)), 1e-3)
          << q << " " << s;
    }
  }
}
