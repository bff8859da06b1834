#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

namespace landau {

/// Running mean/variance (Welford); merge() is Chan's pairwise update.
class Accumulator {
 public:
  void add(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  void merge(const Accumulator& other) noexcept {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double n1 = static_cast<double>(count_);
    const double n2 = static_cast<double>(other.count_);
    const double delta = other.mean_ - mean_;
    const double n = n1 + n2;
    mean_ += delta * n2 / n;
    m2_ += other.m2_ + delta * delta * n1 * n2 / n;
    count_ += other.count_;
  }

  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return count_ ? mean_ : std::numeric_limits<double>::quiet_NaN(); }
  double variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  double stddev() const noexcept { return std::sqrt(variance()); }
  double stderr_mean() const noexcept {
    return count_ ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Monte-Carlo probability with its binomial standard error, next to the
/// exact value when one is known.
struct ProbabilityEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t trials = 0;
  double exact = std::numeric_limits<double>::quiet_NaN();

  static ProbabilityEstimate from_counts(std::size_t hits, std::size_t trials, double exact) {
    ProbabilityEstimate p;
    p.trials = trials;
    p.exact = exact;
    p.estimate = trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0;
    p.stderr_ = trials ? std::sqrt(p.estimate * (1.0 - p.estimate) / static_cast<double>(trials)) : 0.0;
    return p;
  }

  /// |estimate - exact| in units of the standard error. A zero standard
  /// error (all hits or all misses) falls back to the exact binomial scale.
  double z_score() const noexcept {
    double se = stderr_;
    if (se == 0.0 && trials > 0) {
      se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(trials));
    }
    const double diff = std::abs(estimate - exact);
    if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / se;
  }

  bool matches_exact(double sigmas = 3.0) const noexcept { return z_score() <= sigmas; }
};

}  // namespace landau
