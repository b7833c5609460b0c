#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "regentree/error.hpp"

namespace regentree {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;
};

/// P(K > x) for the Kolmogorov distribution.
inline double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 1.0) {
    // Theta-function form converges fast for small x.
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
    double s = 0.0;
    for (int k = 1; k < 100; ++k) {
      const double term = std::exp(-static_cast<double>((2 * k - 1) * (2 * k - 1)) * c);
      s += term;
      if (term < 1e-16) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-10) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

/// One-sample Kolmogorov-Smirnov test. `cdf_left` gives F(x-) for laws
/// with atoms; omitted for continuous laws.
inline TestResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf,
                          const std::function<double(double)>& cdf_left = {}) {
  require(samples.size() >= 100, "Kolmogorov-Smirnov test needs at least 100 samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size();) {
    std::size_t j = i;
    while (j < samples.size() && samples[j] == samples[i]) ++j;
    const double x = samples[i];
    const double hi = cdf(x);
    const double lo = cdf_left ? cdf_left(x) : hi;
    d = std::max(d, std::abs(static_cast<double>(j) / n - hi));
    d = std::max(d, std::abs(static_cast<double>(i) / n - lo));
    i = j;
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d), 0.0};
}

inline double chi2_sf(double stat, double df) {
  if (df <= 0.0) return 1.0;
  if (stat <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * stat);
}

namespace detail {

// Adjacent cells merged left to right until each expected count is >= 5;
// a short last group joins its predecessor.
inline void merge_cells(const std::vector<double>& obs, const std::vector<double>& expect, std::vector<double>& mo,
                        std::vector<double>& me) {
  mo.clear();
  me.clear();
  double o = 0.0, e = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    o += obs[i];
    e += expect[i];
    if (e >= 5.0) {
      mo.push_back(o);
      me.push_back(e);
      o = e = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    if (me.empty()) {
      mo.push_back(o);
      me.push_back(e);
    } else {
      mo.back() += o;
      me.back() += e;
    }
  }
}

inline double pearson(const std::vector<double>& mo, const std::vector<double>& me) {
  double s = 0.0;
  for (std::size_t i = 0; i < mo.size(); ++i) {
    if (me[i] > 0.0) {
      s += (mo[i] - me[i]) * (mo[i] - me[i]) / me[i];
    } else if (mo[i] > 0.0) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return s;
}

}  // namespace detail

/// Pearson goodness of fit. `expected` holds cell probabilities over the
/// whole outcome space (summing to 1); estimated parameters reduce the
/// degrees of freedom by `ddof`.
inline TestResult chi2_test(const std::vector<std::uint64_t>& observed, const std::vector<double>& expected,
                            int ddof = 0) {
  require(observed.size() == expected.size(), "observed and expected cell counts differ");
  double total = 0.0, mass = 0.0;
  for (auto o : observed) total += static_cast<double>(o);
  for (double p : expected) {
    require(p >= 0.0, "cell probabilities must be nonnegative");
    mass += p;
  }
  require(std::abs(mass - 1.0) < 1e-6, "cell probabilities must sum to 1");
  require(total > 0.0, "chi-square test needs observations");
  std::vector<double> obs(observed.begin(), observed.end()), ex(expected.size());
  for (std::size_t i = 0; i < ex.size(); ++i) ex[i] = total * expected[i] / mass;
  std::vector<double> mo, me;
  detail::merge_cells(obs, ex, mo, me);
  require(mo.size() >= 2, "chi-square test is degenerate: a single cell after merging");
  const double stat = detail::pearson(mo, me);
  const double df = static_cast<double>(mo.size()) - 1.0 - ddof;
  require(df >= 1.0, "chi-square test has no degrees of freedom");
  return {stat, chi2_sf(stat, df), df};
}

/// Independence test on a contingency table; empty rows and columns are
/// dropped. Returns p = 1 with df = 0 when fewer than two of either remain.
inline TestResult chi2_independence(const std::vector<std::vector<std::uint64_t>>& table) {
  std::vector<double> rs, cs;
  const std::size_t cols = table.empty() ? 0 : table[0].size();
  rs.assign(table.size(), 0.0);
  cs.assign(cols, 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    require(table[i].size() == cols, "ragged contingency table");
    for (std::size_t j = 0; j < cols; ++j) {
      rs[i] += static_cast<double>(table[i][j]);
      cs[j] += static_cast<double>(table[i][j]);
    }
    n += rs[i];
  }
  const auto nr = std::count_if(rs.begin(), rs.end(), [](double x) { return x > 0.0; });
  const auto nc = std::count_if(cs.begin(), cs.end(), [](double x) { return x > 0.0; });
  if (nr < 2 || nc < 2) return {0.0, 1.0, 0.0};
  double stat = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (rs[i] == 0.0) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      if (cs[j] == 0.0) continue;
      const double e = rs[i] * cs[j] / n;
      const double d = static_cast<double>(table[i][j]) - e;
      stat += d * d / e;
    }
  }
  const double df = static_cast<double>((nr - 1) * (nc - 1));
  return {stat, chi2_sf(stat, df), df};
}

/// Sum of per-stratum Pearson statistics with cells merged inside each
/// stratum. Strata whose total expected count is below 10 are skipped.
class StratifiedChi2 {
 public:
  void add(const std::vector<std::uint64_t>& observed, const std::vector<double>& probs) {
    require(observed.size() == probs.size(), "observed and expected cell counts differ");
    double total = 0.0, mass = 0.0;
    for (auto o : observed) total += static_cast<double>(o);
    for (double p : probs) mass += p;
    require(std::abs(mass - 1.0) < 1e-6, "cell probabilities must sum to 1");
    if (total < 10.0) return;
    std::vector<double> obs(observed.begin(), observed.end()), ex(probs.size());
    for (std::size_t i = 0; i < ex.size(); ++i) ex[i] = total * probs[i] / mass;
    std::vector<double> mo, me;
    detail::merge_cells(obs, ex, mo, me);
    if (mo.size() < 2) return;
    stat_ += detail::pearson(mo, me);
    df_ += static_cast<double>(mo.size()) - 1.0;
    ++strata_;
  }

  std::size_t strata() const { return strata_; }

  TestResult result() const { return {stat_, chi2_sf(stat_, df_), df_}; }

 private:
  double stat_ = 0.0;
  double df_ = 0.0;
  std::size_t strata_ = 0;
};

/// Bonferroni combination of several p-values.
inline double bonferroni(const std::vector<double>& ps) {
  if (ps.empty()) return 1.0;
  const double m = *std::min_element(ps.begin(), ps.end());
  return std::min(1.0, m * static_cast<double>(ps.size()));
}

/// Kahan-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace regentree
