#pragma once

// Single-site coupling distributions: the stretched-exponential law
// rho(w) = rho0 exp(-|w|^alpha), simple reference measures, empirical
// measures, and the concentration functional Q(s) = 8 sup_a nu([a, a+s]).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "landau/common.hpp"
#include "landau/rng.hpp"

namespace landau {

inline constexpr double concentration_factor = 8.0;

class StretchedExpMeasure {
 public:
  explicit StretchedExpMeasure(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw SpecError("alpha must be > 0");
    rho0_ = alpha / (2.0 * std::tgamma(1.0 / alpha));
  }

  double alpha() const noexcept { return alpha_; }
  double rho0() const noexcept { return rho0_; }

  double density(double w) const noexcept { return rho0_ * std::exp(-std::pow(std::abs(w), alpha_)); }

  /// P(|w| <= t), t >= 0.
  double abs_cdf(double t) const {
    if (t <= 0.0) return 0.0;
    return boost::math::gamma_p(1.0 / alpha_, std::pow(t, alpha_));
  }

  /// P(|w| >= eps).
  double tail(double eps) const {
    if (eps <= 0.0) return 1.0;
    return boost::math::gamma_q(1.0 / alpha_, std::pow(eps, alpha_));
  }

  double cdf(double x) const {
    const double half = 0.5 * abs_cdf(std::abs(x));
    return x >= 0.0 ? 0.5 + half : 0.5 - half;
  }

  /// nu([a, b]).
  double mass(double a, double b) const {
    if (b <= a) return 0.0;
    if (a >= 0.0) return 0.5 * (abs_cdf(b) - abs_cdf(a));
    if (b <= 0.0) return 0.5 * (abs_cdf(-a) - abs_cdf(-b));
    return 0.5 * (abs_cdf(-a) + abs_cdf(b));
  }

  /// E|w|^q.
  double abs_moment(double q) const {
    return std::exp(std::lgamma((q + 1.0) / alpha_) - std::lgamma(1.0 / alpha_));
  }

  /// int_a^b |t|^q rho(t) dt, the mass of the modified measure |t|^q dmu.
  double modified_mass(double q, double a, double b) const {
    if (b <= a) return 0.0;
    auto prim = [&](double x) {
      // int_0^|x| t^q rho0 e^{-t^alpha} dt = rho0/alpha * gamma_lower((q+1)/alpha, |x|^alpha)
      if (x == 0.0) return 0.0;
      const double v = rho0_ / alpha_ *
                       boost::math::tgamma_lower((q + 1.0) / alpha_, std::pow(std::abs(x), alpha_));
      return x > 0.0 ? v : -v;
    };
    return prim(b) - prim(a);
  }

  /// Density of the modified measure, |t|^q rho(t).
  double modified_density(double q, double t) const {
    return q == 0.0 ? density(t) : std::pow(std::abs(t), q) * density(t);
  }

  /// i.i.d. draws: |w| = G^{1/alpha} with G ~ Gamma(1/alpha, 1), uniform sign.
  std::vector<double> sample(std::uint64_t seed, std::size_t n) const {
    Rng rng = make_rng(seed);
    return sample(rng, n);
  }

  std::vector<double> sample(Rng& rng, std::size_t n) const {
    std::gamma_distribution<double> gamma(1.0 / alpha_, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> out(n);
    for (auto& w : out) {
      const double g = gamma(rng);
      const double mag = std::pow(g, 1.0 / alpha_);
      w = sign(rng) ? mag : -mag;
    }
    return out;
  }

 private:
  double alpha_;
  double rho0_;
};

struct UniformMeasure {
  double lo = 0.0;
  double hi = 1.0;
};

struct PointMass {
  double at = 0.0;
};

/// Sorted sample standing in for an abstract measure.
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(std::vector<double> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw SpecError("empirical measure needs at least one sample");
    std::sort(samples_.begin(), samples_.end());
  }

  std::span<const double> samples() const noexcept { return samples_; }
  std::size_t count() const noexcept { return samples_.size(); }

  /// Largest number of samples inside a closed window of length s.
  std::size_t max_window_count(double s) const {
    std::size_t best = 0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (j < i) j = i;
      while (j < samples_.size() && samples_[j] - samples_[i] <= s) ++j;
      best = std::max(best, j - i);
    }
    return best;
  }

 private:
  std::vector<double> samples_;
};

using Measure = std::variant<StretchedExpMeasure, UniformMeasure, PointMass, EmpiricalMeasure>;

/// Q_nu(s) = 8 sup_a nu([a, a+s]).
inline double concentration(const StretchedExpMeasure& m, double s) {
  if (s < 0.0) throw SpecError("concentration: s must be >= 0");
  if (s == 0.0) return 0.0;
  // symmetric unimodal: the optimal window is centred on the mode
  return concentration_factor * m.abs_cdf(0.5 * s);
}

inline double concentration(const UniformMeasure& m, double s) {
  if (s < 0.0) throw SpecError("concentration: s must be >= 0");
  const double width = m.hi - m.lo;
  if (width <= 0.0) return concentration_factor;
  return concentration_factor * std::min(s, width) / width;
}

inline double concentration(const PointMass&, double s) {
  if (s < 0.0) throw SpecError("concentration: s must be >= 0");
  return concentration_factor;
}

inline double concentration(const EmpiricalMeasure& m, double s) {
  if (s < 0.0) throw SpecError("concentration: s must be >= 0");
  return concentration_factor * static_cast<double>(m.max_window_count(s)) /
         static_cast<double>(m.count());
}

inline double concentration(const Measure& m, double s) {
  return std::visit([s](const auto& v) { return concentration(v, s); }, m);
}

namespace detail {

/// Golden-section maximization of a unimodal-on-[lo,hi] function.
template <class F>
double golden_max(F&& f, double lo, double hi, double tol) {
  constexpr double inv_phi = 0.6180339887498948482;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return std::max({fc, fd, f(lo), f(hi)});
}

}  // namespace detail

/// Q of the modified measure d mu^(q)(t) = |t|^q d mu(t).
///
/// The window mass has a closed form through the lower incomplete gamma
/// function. For q > 0 the density is bimodal with peaks at
/// +-(q/alpha)^(1/alpha), so the window position is scanned on a grid and the
/// best cell refined by golden section.
inline double modified_concentration(const StretchedExpMeasure& m, double q, double s) {
  if (q < 0.0) throw SpecError("modified_concentration: q must be >= 0");
  if (s < 0.0) throw SpecError("modified_concentration: s must be >= 0");
  if (q == 0.0) return concentration(m, s);
  if (s == 0.0) return 0.0;

  const double peak = std::pow(q / m.alpha(), 1.0 / m.alpha());
  auto window = [&](double a) { return m.modified_mass(q, a, a + s); };

  // W(a) = W(-a-s): restrict to a >= -s/2. Windows starting right of the
  // peak only lose mass, so a <= peak.
  const double lo = -0.5 * s;
  const double hi = std::max(peak, lo);
  constexpr int grid = 256;
  const double step = (hi - lo) / grid;
  if (step <= 0.0) return concentration_factor * window(lo);

  int best = 0;
  double best_val = window(lo);
  for (int i = 1; i <= grid; ++i) {
    const double v = window(lo + i * step);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  const double a0 = lo + std::max(0, best - 1) * step;
  const double a1 = lo + std::min(grid, best + 1) * step;
  const double sup =
      std::max(best_val, detail::golden_max(window, a0, a1, 1e-12 * (1.0 + std::abs(a1))));
  return concentration_factor * sup;
}

/// Exact tail and the sub-Gaussian-type envelope C_alpha exp(-eps^alpha / 2).
struct TailProbability {
  double exact = 0.0;
  double bound = 0.0;
  double c_alpha = 0.0;
};

/// Smallest C with P(|w| >= eps) <= C exp(-eps^alpha/2) for all eps >= 0,
/// i.e. sup_u Q(1/alpha, u) e^{u/2} with u = eps^alpha.
inline double tail_bound_constant(const StretchedExpMeasure& m) {
  const double a = 1.0 / m.alpha();
  auto log_ratio = [a](double u) {
    const double qv = boost::math::gamma_q(a, u);
    return qv > 0.0 ? std::log(qv) + 0.5 * u : -1e300;
  };
  // log Q(a,u) + u/2 ~ -u/2 + (a-1) log u for large u
  const double u_max = std::max(60.0, 8.0 * (a + 10.0));
  constexpr int grid = 4000;
  const double step = u_max / grid;
  int best = 0;
  double best_val = log_ratio(0.0);
  for (int i = 1; i <= grid; ++i) {
    const double v = log_ratio(i * step);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  const double lo = std::max(0, best - 1) * step;
  const double hi = std::min(grid, best + 1) * step;
  const double refined = detail::golden_max(log_ratio, lo, hi, 1e-12);
  return std::exp(std::max(best_val, refined));
}

inline TailProbability tail_probability(const StretchedExpMeasure& m, double eps) {
  if (eps < 0.0) throw SpecError("tail_probability: eps must be >= 0");
  TailProbability t;
  t.exact = m.tail(eps);
  t.c_alpha = tail_bound_constant(m);
  t.bound = t.c_alpha * std::exp(-0.5 * std::pow(eps, m.alpha()));
  return t;
}

}  // namespace landau
