#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "regentree/error.hpp"
#include "regentree/rng.hpp"

namespace regentree {

namespace detail {

// Upper incomplete gamma for any non-integer a, z > 0, by recurring up to a > 0.
inline double upper_gamma(double a, double z) {
  if (a > 0.0) return boost::math::tgamma(a, z);
  return (upper_gamma(a + 1.0, z) - std::pow(z, a) * std::exp(-z)) / a;
}

/// sum_{k > K} k^{-s} e^{-w k} for s > 1, w >= 0: Euler-Maclaurin on top of
/// the closed-form integral. Accurate to rounding for K >= 1000.
inline double power_tail_sum(double K, double s, double w) {
  const double z = w * K;
  // Below 1e-17 of the head mass; not worth the recurrence.
  if (z > 40.0) return 0.0;
  const double integral = w == 0.0 ? std::pow(K, 1.0 - s) / (s - 1.0) : std::pow(w, s - 1.0) * upper_gamma(1.0 - s, z);
  const double f = std::pow(K, -s) * std::exp(-z);
  const double g1 = -s / K - w, g2 = s / (K * K), g3 = -2.0 * s / (K * K * K);
  const double d1 = f * g1, d3 = f * (g1 * g1 * g1 + 3.0 * g1 * g2 + g3);
  return integral - 0.5 * f - d1 / 12.0 + d3 / 720.0;
}

/// k > K with P(k) proportional to k^{-s}: floored Pareto proposal, thinned.
inline std::uint64_t sample_power_tail(std::uint64_t K, double s, Rng& rng) {
  const double lo = static_cast<double>(K) + 1.0;
  const auto ratio = [s](double k) {
    return (s - 1.0) * std::pow(k, -s) / (std::pow(k, 1.0 - s) * -std::expm1((1.0 - s) * std::log1p(1.0 / k)));
  };
  const double bound = ratio(lo);
  for (;;) {
    const double y = lo * std::pow(rng.uniform_pos(), -1.0 / (s - 1.0));
    if (!(y < 0x1p62)) throw Error(ErrorKind::cap_exceeded, "offspring count beyond 2^62");
    const double k = std::floor(y);
    if (rng.uniform() * bound < ratio(k)) return static_cast<std::uint64_t>(k);
  }
}

}  // namespace detail

/// Offspring law on the nonnegative integers: an explicit finite pmf, or the
/// critical geometric law p_k = 2^{-k-1}. The stable-tail family keeps an
/// explicit table up to kmax and treats k > kmax analytically.
class OffspringDistribution {
 public:
  enum class Family { finite, geometric, stable };

  OffspringDistribution() : OffspringDistribution(std::vector<double>{1.0}) {}

  explicit OffspringDistribution(std::vector<double> pmf, Family family = Family::finite, double alpha = 0.0)
      : family_(family), alpha_(alpha), pmf_(std::move(pmf)) {
    require(!pmf_.empty(), "empty offspring pmf");
    double total = 0.0;
    for (double p : pmf_) {
      require(std::isfinite(p) && p >= 0.0, "offspring probabilities must be nonnegative");
      total += p;
    }
    require(std::abs(total - 1.0) <= 1e-12, "offspring probabilities must sum to 1");
    for (double& p : pmf_) p /= total;
    while (pmf_.size() > 1 && pmf_.back() == 0.0) pmf_.pop_back();
    init_table();
  }

  /// p_k = 2^{-k-1}: mean 1, variance 2.
  static OffspringDistribution geometric_half() {
    OffspringDistribution d;
    d.family_ = Family::geometric;
    d.pmf_.clear();
    d.cdf_.clear();
    d.mean_ = 1.0;
    d.second_ = 3.0;
    return d;
  }

  /// p_k = c k^{-1-alpha} for all k >= 2, p_1 = 0, p_0 set so that the mean
  /// is exactly 1. Only k <= kmax is tabulated.
  static OffspringDistribution stable(double alpha, std::size_t kmax = 100000) {
    require(alpha > 1.0 && alpha < 2.0, "stable index must lie in (1, 2)");
    require(kmax >= 1000, "kmax must be at least 1000");
    const auto K = static_cast<double>(kmax);
    const double tail0 = detail::power_tail_sum(K, 1.0 + alpha, 0.0);
    const double tail1 = detail::power_tail_sum(K, alpha, 0.0);
    std::vector<double> w(kmax + 1, 0.0);
    double mass = tail0, mean = tail1;
    // Sum small terms first.
    for (std::size_t k = kmax; k >= 2; --k) {
      w[k] = std::pow(static_cast<double>(k), -1.0 - alpha);
      mass += w[k];
      mean += static_cast<double>(k) * w[k];
    }
    const double c = 1.0 / mean;
    for (std::size_t k = 2; k <= kmax; ++k) w[k] *= c;
    w[0] = 1.0 - c * mass;
    OffspringDistribution d;
    d.family_ = Family::stable;
    d.alpha_ = alpha;
    d.pmf_ = std::move(w);
    d.tail_c_ = c;
    d.tail_mass_ = c * tail0;
    d.init_table();
    d.mean_ += c * tail1;
    d.second_ = std::numeric_limits<double>::infinity();
    return d;
  }

  static OffspringDistribution binary(double p0) {
    require(p0 >= 0.0 && p0 <= 1.0, "binary p0 must lie in [0, 1]");
    return OffspringDistribution({p0, 0.0, 1.0 - p0});
  }

  Family family() const { return family_; }
  double alpha() const { return alpha_; }
  double mean() const { return mean_; }
  double variance() const { return second_ - mean_ * mean_; }
  bool is_critical(double tol = 1e-12) const { return std::abs(mean_ - 1.0) <= tol; }
  bool is_subcritical_or_critical(double tol = 1e-12) const { return mean_ <= 1.0 + tol; }

  /// Largest k with positive mass; unbounded for the geometric and stable families.
  std::size_t max_offspring() const {
    return family_ == Family::finite ? pmf_.size() - 1 : std::numeric_limits<std::size_t>::max();
  }

  double pmf(std::size_t k) const {
    if (family_ == Family::geometric) return std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(k, 2000)) - 1);
    if (k < pmf_.size()) return pmf_[k];
    return tail_c_ * std::pow(static_cast<double>(k), -1.0 - alpha_);
  }

  /// Explicit pmf vector (empty for the geometric family). For the stable
  /// family it stops at kmax and misses tail_mass().
  const std::vector<double>& pmf_table() const { return pmf_; }

  /// Mass beyond the table.
  double tail_mass() const { return tail_mass_; }

  /// k > kmax from the stable tail with P(k) proportional to k^{-s}.
  std::uint64_t sample_tail(Rng& rng, double s) const { return detail::sample_power_tail(pmf_.size() - 1, s, rng); }

  /// Generating function f(s) = sum p_k s^k.
  double pgf(double s) const {
    if (family_ == Family::geometric) return 1.0 / (2.0 - s);
    double acc = 0.0;
    for (std::size_t k = pmf_.size(); k-- > 0;) acc = acc * s + pmf_[k];
    if (tail_c_ > 0.0 && s > 0.0) acc += tail_c_ * tail_sum(-std::log(s));
    return acc;
  }

  /// f(1 - v) - (1 - v), computed without cancellation for small v.
  double pgf_defect(double v) const {
    if (family_ == Family::geometric) return v * v / (1.0 + v);
    if (v > 0.5) return pgf(1.0 - v) - (1.0 - v);
    const double l = std::log1p(-v);
    double acc = 0.0;
    for (std::size_t k = 0; k < pmf_.size(); ++k) {
      if (pmf_[k] == 0.0) continue;
      acc += pmf_[k] * (1.0 - v) * std::expm1((static_cast<double>(k) - 1.0) * l);
    }
    if (tail_c_ > 0.0) acc += tail_c_ * tail_sum(-l) - (1.0 - v) * tail_mass_;
    return acc;
  }

  std::uint64_t sample(Rng& rng) const {
    if (family_ == Family::geometric) return rng.geometric(0.5);
    const double u = rng.uniform();
    if (u >= cdf_.back()) return sample_tail(rng, 1.0 + alpha_);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  }

  std::string describe() const {
    switch (family_) {
      case Family::geometric: return "geometric(1/2)";
      case Family::stable: return "stable(" + std::to_string(alpha_) + ")";
      case Family::finite: break;
    }
    std::string s = "{";
    for (std::size_t k = 0; k < pmf_.size(); ++k) {
      if (pmf_[k] == 0.0) continue;
      if (s.size() > 1) s += ", ";
      s += std::to_string(k) + ": " + std::to_string(pmf_[k]);
    }
    return s + "}";
  }

 private:
  void init_table() {
    cdf_.resize(pmf_.size());
    double c = 0.0;
    mean_ = 0.0;
    second_ = 0.0;
    for (std::size_t k = 0; k < pmf_.size(); ++k) {
      c += pmf_[k];
      cdf_[k] = c;
      mean_ += static_cast<double>(k) * pmf_[k];
      second_ += static_cast<double>(k) * static_cast<double>(k) * pmf_[k];
    }
    cdf_.back() = 1.0 - tail_mass_;
  }

  // sum_{k > kmax} k^{-1-alpha} e^{-w k}
  double tail_sum(double w) const {
    return detail::power_tail_sum(static_cast<double>(pmf_.size() - 1), 1.0 + alpha_, w);
  }

  Family family_ = Family::finite;
  double alpha_ = 0.0;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double second_ = 0.0;
  double tail_c_ = 0.0;
  double tail_mass_ = 0.0;
};

/// Branching at rate a per unit height with offspring law gamma, gamma(1) = 0.
struct FiniteThetaParams {
  double a = 1.0;
  OffspringDistribution gamma = OffspringDistribution::binary(0.5);

  void validate() const {
    require(std::isfinite(a) && a > 0.0, "branching rate a must be positive");
    require(gamma.family() == OffspringDistribution::Family::finite, "finite-case offspring must be a finite pmf");
    require(gamma.pmf(1) == 0.0, "finite-case offspring must have gamma(1) = 0");
    require(gamma.is_subcritical_or_critical(), "finite-case offspring must be critical or subcritical");
  }
};

}  // namespace regentree
