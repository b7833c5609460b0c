#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "regentree/csbp.hpp"
#include "regentree/discretize.hpp"
#include "regentree/gh_metric.hpp"
#include "regentree/offspring.hpp"
#include "regentree/rng.hpp"
#include "regentree/samplers.hpp"
#include "regentree/stats.hpp"
#include "regentree/tree.hpp"

namespace regentree {

struct CheckSpec {
  std::string name;
  std::map<std::string, double> params;
  std::size_t n_samples = 0;  // 0 selects the check's default
  RngState seed{7, 0};
  double significance = 1e-3;
};

struct CheckReport {
  std::string name;
  double statistic = 0.0;
  /// p-value for statistical checks; 1 or 0 for bound and exact checks.
  double p_value = 0.0;
  bool pass = false;
  double runtime = 0.0;
  std::size_t samples_used = 0;
  std::string detail;
};

/// Tail v of the finite-case law tabulated on [0, tmax] and linearly
/// interpolated; beyond tmax the ODE is solved directly.
class VTable {
 public:
  VTable(const FiniteThetaParams& p, double tmax, std::size_t steps = 4096) : p_(p), tmax_(tmax) {
    require(tmax > 0.0, "table range must be positive");
    step_ = tmax / static_cast<double>(steps);
    v_.resize(steps + 1);
    v_[0] = 1.0;
    const double dt0 = std::min(step_, 0.01 / p.a);
    for (std::size_t i = 1; i <= steps; ++i) {
      v_[i] = detail::integrate_scalar(
          [&](double x) { return -p.a * p.gamma.pgf_defect(std::clamp(x, 0.0, 1.0)); }, v_[i - 1], step_,
          kDefaultOdeTol * 1e-2, dt0);
    }
  }

  double operator()(double t) const {
    if (t <= 0.0) return 1.0;
    if (t >= tmax_) return dsbp_extinction_ode(p_, t);
    const double x = t / step_;
    const auto i = static_cast<std::size_t>(x);
    const double w = x - static_cast<double>(i);
    return (1.0 - w) * v_[i] + w * v_[std::min(i + 1, v_.size() - 1)];
  }

 private:
  FiniteThetaParams p_;
  double tmax_;
  double step_;
  std::vector<double> v_;
};

namespace verify_detail {

struct Ctx {
  std::map<std::string, double> params;
  std::size_t n = 0;
  RngState seed;
  double significance = 1e-3;

  double get(const std::string& key) const { return params.at(key); }

  FiniteThetaParams finite() const {
    FiniteThetaParams p;
    p.a = get("a");
    std::vector<double> pmf;
    for (int k = 0; k <= 9; ++k) {
      const auto it = params.find("gamma_" + std::to_string(k));
      if (it == params.end()) continue;
      if (pmf.size() <= static_cast<std::size_t>(k)) pmf.resize(k + 1, 0.0);
      pmf[k] = it->second;
    }
    p.gamma = OffspringDistribution(pmf);
    p.validate();
    return p;
  }
};

template <typename Fn>
auto replicas(const Ctx& c, std::size_t n, std::uint64_t part, Fn fn) {
  const RngState base = c.seed.derive(part);
  return parallel_map(n, [&](std::size_t i) {
    Rng rng(base.derive(i));
    return fn(rng);
  });
}

inline std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

inline CheckReport statistical(double stat, double p, const Ctx& c, std::size_t used, std::string detail) {
  CheckReport r;
  r.statistic = stat;
  r.p_value = p;
  r.pass = p >= c.significance;
  r.samples_used = used;
  r.detail = std::move(detail);
  return r;
}

inline CheckReport bound(double stat, bool ok, std::size_t used, std::string detail) {
  CheckReport r;
  r.statistic = stat;
  r.p_value = ok ? 1.0 : 0.0;
  r.pass = ok;
  r.samples_used = used;
  r.detail = std::move(detail);
  return r;
}

// Truncation level for checks that only look near the root or at generic
// levels; the root edge exceeds it with probability e^-50.
inline double root_cut(const FiniteThetaParams& p) { return 50.0 / p.a; }

inline std::vector<double> binomial_pmf(std::size_t n, double q) {
  std::vector<double> out(n + 1);
  boost::math::binomial_distribution<double> b(static_cast<double>(n), q);
  for (std::size_t k = 0; k <= n; ++k) out[k] = boost::math::pdf(b, static_cast<double>(k));
  return out;
}

// Cells 0..m-1 from pmf plus a tail cell carrying the rest of the mass.
inline std::vector<double> cells_with_tail(const std::vector<double>& pmf, std::size_t m) {
  std::vector<double> out(m + 1, 0.0);
  double s = 0.0;
  for (std::size_t k = 0; k < m && k < pmf.size(); ++k) {
    out[k] = pmf[k];
    s += pmf[k];
  }
  out[m] = std::max(0.0, 1.0 - s);
  return out;
}

inline std::vector<std::uint64_t> histogram(const std::vector<std::size_t>& xs, std::size_t m) {
  std::vector<std::uint64_t> h(m + 1, 0);
  for (auto x : xs) ++h[std::min(x, m)];
  return h;
}

inline std::size_t quartile(double u) { return std::min<std::size_t>(3, static_cast<std::size_t>(std::max(0.0, 4.0 * u))); }

inline std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b, std::size_t cap) {
  std::vector<double> out(std::min(a.size() + b.size() - 1, cap), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size() && i + j < out.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

// KS of pooled heights plus 4x4 independence of the first two of each
// sibling family, both against the law `cdf` (left limits in `cdf_left`
// when it has atoms).
inline std::pair<TestResult, TestResult> height_family_tests(const std::vector<std::vector<double>>& families,
                                                              const std::function<double(double)>& cdf,
                                                              const std::function<double(double)>& cdf_left = {}) {
  std::vector<double> pooled;
  std::vector<std::vector<std::uint64_t>> table(4, std::vector<std::uint64_t>(4, 0));
  for (const auto& f : families) {
    pooled.insert(pooled.end(), f.begin(), f.end());
    if (f.size() >= 2) ++table[quartile(cdf(f[0]))][quartile(cdf(f[1]))];
  }
  return {ks_test(std::move(pooled), cdf, cdf_left), chi2_independence(table)};
}

// ---------------------------------------------------------------------------

inline CheckReport binomial_slicing(const Ctx& c) {
  const auto p = c.finite();
  const double t = c.get("t"), la = c.get("a_level"), lb = c.get("b_level");
  require(t >= 0.0 && la > 0.0 && lb > la, "binomial_slicing needs t >= 0 and 0 < a_level < b_level");
  const double q = dsbp_extinction_ode(p, lb) / dsbp_extinction_ode(p, la);
  struct Out {
    std::size_t k = 0, j = 0;
  };
  const auto res = replicas(c, c.n, 0, [&](Rng& rng) {
    const MarkedTree tr = sample_finite_theta(p, rng, kDefaultTreeCap, t + lb + 1.0);
    return Out{count_Z(tr, t, la), count_Z(tr, t, lb)};
  });
  std::map<std::size_t, std::vector<std::size_t>> by_k;
  for (const auto& o : res)
    if (o.k > 0) by_k[o.k].push_back(o.j);
  StratifiedChi2 chi;
  for (const auto& [k, js] : by_k) chi.add(histogram(js, k), binomial_pmf(k, q));
  const auto r = chi.result();
  return statistical(r.statistic, r.p_value, c, c.n,
                     "strata=" + std::to_string(chi.strata()) + " df=" + fmt(r.df) + " q=" + fmt(q));
}

inline CheckReport regenerative_R(const Ctx& c) {
  const auto p = c.finite();
  const double t = c.get("t"), h = c.get("h");
  require(t >= 0.0 && h > 0.0, "regenerative_R needs t >= 0 and h > 0");
  // Excess heights are censored at T by cutting the tree at t + h + T.
  const double T = 40.0 / p.a;
  const VTable v(p, h + T);
  const double vh = v(h);
  const auto fams = replicas(c, c.n, 0, [&](Rng& rng) {
    const MarkedTree tr = sample_finite_theta(p, rng, kDefaultTreeCap, t + h + T);
    std::vector<double> xs;
    for (Index u : crossing_nodes(tr, t)) {
      const double ht = tr.subtree_top(u) - t;
      if (ht > h) xs.push_back(std::min(ht - h, T));
    }
    return xs;
  });
  const auto [ks, ind] = height_family_tests(
      fams, [&](double x) { return x >= T ? 1.0 : 1.0 - v(h + x) / vh; },
      [&](double x) { return 1.0 - v(h + std::min(x, T)) / vh; });
  return statistical(ks.statistic, bonferroni({ks.p_value, ind.p_value}), c, c.n,
                     "ks_p=" + fmt(ks.p_value) + " indep_p=" + fmt(ind.p_value));
}

inline CheckReport exp_first_branch(const Ctx& c) {
  const auto p = c.finite();
  const auto js = replicas(c, c.n, 0, [&](Rng& rng) { return sample_finite_theta(p, rng, kDefaultTreeCap, root_cut(p)).length(0); });
  const auto ks = ks_test(js, [&](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-p.a * x); });
  return statistical(ks.statistic, ks.p_value, c, c.n, "");
}

inline CheckReport offspring_at_J(const Ctx& c) {
  const auto p = c.finite();
  struct Out {
    double j = 0.0;
    std::size_t k = 0;
  };
  const auto res = replicas(c, c.n, 0, [&](Rng& rng) {
    const MarkedTree tr = sample_finite_theta(p, rng, kDefaultTreeCap, root_cut(p));
    const double j = tr.length(0);
    return Out{j, crossing_nodes(tr, j).size()};
  });
  const std::size_t kmax = p.gamma.max_offspring();
  std::vector<std::size_t> ks;
  std::vector<std::vector<std::uint64_t>> table(kmax + 1, std::vector<std::uint64_t>(4, 0));
  for (const auto& o : res) {
    ks.push_back(o.k);
    ++table[std::min(o.k, kmax)][quartile(-std::expm1(-p.a * o.j))];
  }
  auto obs = histogram(ks, kmax + 1);
  std::vector<double> probs(kmax + 2, 0.0);
  for (std::size_t k = 0; k <= kmax; ++k) probs[k] = p.gamma.pmf(k);
  // Drop impossible cells; an observation there would already be a failure.
  std::vector<std::uint64_t> o2;
  std::vector<double> p2;
  bool impossible = false;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] > 0.0) {
      o2.push_back(obs[k]);
      p2.push_back(probs[k]);
    } else if (obs[k] > 0) {
      impossible = true;
    }
  }
  const auto fit = chi2_test(o2, p2);
  const auto ind = chi2_independence(table);
  const double pv = impossible ? 0.0 : bonferroni({fit.p_value, ind.p_value});
  return statistical(fit.statistic, pv, c, c.n, "fit_p=" + fmt(fit.p_value) + " indep_p=" + fmt(ind.p_value));
}

inline CheckReport subtrees_iid_at_J(const Ctx& c) {
  const auto p = c.finite();
  const VTable v(p, 40.0 / p.a);
  const auto fams = replicas(c, c.n, 0, [&](Rng& rng) {
    const MarkedTree tr = sample_finite_theta(p, rng);
    const double j = tr.length(0);
    std::vector<double> hs;
    for (Index u : crossing_nodes(tr, j)) hs.push_back(tr.subtree_top(u) - j);
    return hs;
  });
  const auto [ks, ind] = height_family_tests(fams, [&](double x) { return 1.0 - v(x); });
  return statistical(ks.statistic, bonferroni({ks.p_value, ind.p_value}), c, c.n,
                     "ks_p=" + fmt(ks.p_value) + " indep_p=" + fmt(ind.p_value));
}

inline CheckReport poisson_forest_gw(const Ctx& c) {
  const auto p = c.finite();
  const double eps = c.get("eps");
  require(eps > 0.0, "poisson_forest_gw needs eps > 0");
  const double intensity = dsbp_extinction_ode(p, eps);
  const auto mu = finite_mu_eps(p, eps);
  struct Out {
    std::size_t x0 = 0, x1 = 0, x2 = 0;
  };
  const auto res = replicas(c, c.n, 0, [&](Rng& rng) {
    const auto forest = sample_poisson_forest(
        [&](Rng& r) { return sample_finite_theta_above(p, eps, r, kDefaultTreeCap, 4.0 * eps); }, intensity, rng);
    Out o;
    o.x0 = forest.size();
    for (const auto& tr : forest) {
      o.x1 += count_Z(tr, eps, eps);
      o.x2 += count_Z(tr, 2.0 * eps, eps);
    }
    return o;
  });
  std::vector<std::size_t> x0s;
  std::map<std::size_t, std::vector<std::size_t>> step;
  for (const auto& o : res) {
    x0s.push_back(o.x0);
    if (o.x0 > 0) step[o.x0].push_back(o.x1);
    if (o.x1 > 0) step[o.x1].push_back(o.x2);
  }
  const std::size_t m0 = *std::max_element(x0s.begin(), x0s.end()) + 1;
  boost::math::poisson_distribution<double> pois(intensity);
  std::vector<double> ppmf(m0);
  for (std::size_t k = 0; k < m0; ++k) ppmf[k] = boost::math::pdf(pois, static_cast<double>(k));
  const auto init = chi2_test(histogram(x0s, m0), cells_with_tail(ppmf, m0));

  StratifiedChi2 chi;
  std::vector<double> conv{1.0};
  std::size_t power = 0;
  for (const auto& [k, xs] : step) {
    while (power < k) {
      conv = convolve(conv, mu, 4096);
      ++power;
    }
    const std::size_t m = *std::max_element(xs.begin(), xs.end()) + 1;
    chi.add(histogram(xs, m), cells_with_tail(conv, m));
  }
  const auto tr = chi.result();
  return statistical(tr.statistic, bonferroni({init.p_value, tr.p_value}), c, c.n,
                     "init_p=" + fmt(init.p_value) + " step_p=" + fmt(tr.p_value) + " v=" + fmt(intensity));
}

inline CheckReport mean_bound_vh(const Ctx& c) {
  const auto p = c.finite();
  const double t = c.get("t"), h = c.get("h");
  require(t >= 0.0 && h > 0.0, "mean_bound_vh needs t >= 0 and h > 0");
  const auto zs = replicas(c, c.n, 0, [&](Rng& rng) {
    return static_cast<double>(count_Z(sample_finite_theta(p, rng, kDefaultTreeCap, t + h + 1.0), t, h));
  });
  CompensatedSum s, s2;
  for (double z : zs) {
    s.add(z);
    s2.add(z * z);
  }
  const double n = static_cast<double>(zs.size());
  const double mean = s.value() / n;
  const double var = std::max(0.0, s2.value() / n - mean * mean);
  const double vh = dsbp_extinction_ode(p, h);
  const double margin = vh + 3.0 * std::sqrt(var / n) - mean;
  return bound(mean, margin >= 0.0, c.n, "v(h)=" + fmt(vh) + " margin=" + fmt(margin));
}

inline CheckReport mu_eps_sandwich(const Ctx& c) {
  const auto p = c.finite();
  double worst = std::numeric_limits<double>::infinity();
  std::string detail;
  std::uint64_t part = 0;
  for (double eps : {0.1, 0.25, 0.5, 1.0}) {
    const double r = dsbp_extinction_ode(p, 2.0 * eps) / dsbp_extinction_ode(p, eps);
    const double lo = 2.0 * r - 1.0, hi = r;
    const auto ones = replicas(c, c.n, part++, [&](Rng& rng) {
      return count_Z(sample_finite_theta_above(p, eps, rng, kDefaultTreeCap, 3.0 * eps), eps, eps) == 1 ? 1 : 0;
    });
    double k = 0.0;
    for (int o : ones) k += o;
    const double n = static_cast<double>(ones.size());
    const double f = k / n;
    // Standard error at the nearer band edge, so a frequency of 0 or 1 still gets slack.
    const double pe = std::clamp(f, std::max(lo, 0.0), hi);
    const double se = std::sqrt(std::max(pe * (1.0 - pe), 1.0 / n) / n);
    const double m = std::min(f - lo + 3.0 * se, hi + 3.0 * se - f);
    worst = std::min(worst, m);
    detail += (detail.empty() ? "" : " ") + fmt(eps) + ":" + fmt(lo) + "<=" + fmt(f) + "<=" + fmt(hi);
  }
  return bound(worst, worst >= 0.0, 4 * c.n, detail);
}

inline CheckReport local_time_limit(const Ctx& c) {
  const auto p = c.finite();
  const double t = c.get("t");
  require(t > 0.0, "local_time_limit needs t > 0");
  // Finite case: Z(t, t + h) is nondecreasing as h decreases and ends at
  // the level-t population.
  const auto bad = replicas(c, c.n, 0, [&](Rng& rng) {
    const MarkedTree tr = sample_finite_theta(p, rng, kDefaultTreeCap, root_cut(p));
    std::size_t prev = 0;
    for (int k = 0; k <= 40; ++k) {
      const std::size_t z = count_Z(tr, t, std::ldexp(1.0, -k));
      if (z < prev) return 1;
      prev = z;
    }
    return prev == count_at_level(tr, t) ? 0 : 1;
  });
  std::size_t violations = 0;
  for (int b : bad) violations += b;

  // Quadratic case: the mean squared increment of Z(t, t + h) / v(h) along
  // h_k = h0 2^-k must shrink.
  const auto n_levy = static_cast<std::size_t>(c.get("levy_n"));
  const double h0 = c.get("h0");
  const int steps = static_cast<int>(c.get("h_steps"));
  require(n_levy >= 10 && h0 > 0.0 && steps >= 2, "local_time_limit quadratic parameters out of range");
  const std::size_t levy_trees = std::max<std::size_t>(100, c.n / 20);
  const double m = static_cast<double>(n_levy);
  const double tq = (std::floor(t * m) + 0.5) / m;  // off the vertex levels
  const double top = std::max(1.0, tq + h0 + 0.05);
  const ApproxLevyTreeSampler draw(LevyFamily::quadratic(), n_levy, 1.0, top);
  const auto incs = replicas(c, levy_trees, 1, [&](Rng& rng) {
    const MarkedTree tr = draw(rng);
    std::vector<double> r;
    for (int k = 0; k <= steps; ++k) {
      const double h = std::ldexp(h0, -k);
      r.push_back(static_cast<double>(count_Z(tr, tq, h)) * h);
    }
    std::vector<double> d;
    for (int k = 0; k < steps; ++k) d.push_back((r[k + 1] - r[k]) * (r[k + 1] - r[k]));
    return d;
  });
  std::vector<double> ms(steps, 0.0);
  for (const auto& d : incs)
    for (int k = 0; k < steps; ++k) ms[k] += d[k] / static_cast<double>(incs.size());
  double worst_ratio = 0.0;
  for (int k = 0; k + 1 < steps; ++k) worst_ratio = std::max(worst_ratio, ms[k + 1] / ms[k]);
  const bool ok = violations == 0 && worst_ratio < 1.0;
  return bound(worst_ratio, ok, c.n + levy_trees,
               "finite_violations=" + std::to_string(violations) + " max_increment_ratio=" + fmt(worst_ratio));
}

inline CheckReport N_equals_L(const Ctx& c) {
  const auto p = c.finite();
  const auto levels = static_cast<int>(c.get("levels"));
  require(levels >= 1, "N_equals_L needs at least one level");
  const auto bad = replicas(c, c.n, 0, [&](Rng& rng) {
    const MarkedTree tr = sample_finite_theta(p, rng, kDefaultTreeCap, root_cut(p));
    std::size_t fails = 0;
    for (int i = 0; i < levels; ++i) {
      const double t = tr.height() * rng.uniform_pos();
      std::size_t last = count_Z(tr, t, std::ldexp(1.0, -30));
      bool stable = true;
      for (int k = 31; k <= 40; ++k) stable = stable && count_Z(tr, t, std::ldexp(1.0, -k)) == last;
      if (!stable || last != count_at_level(tr, t)) ++fails;
    }
    return fails;
  });
  std::size_t fails = 0;
  for (auto b : bad) fails += b;
  return bound(static_cast<double>(fails), fails == 0, c.n,
               std::to_string(fails) + " of " + std::to_string(c.n * static_cast<std::size_t>(levels)) + " levels differ");
}

inline CheckReport csbp_limit_laplace(const Ctx& c) {
  const auto n = static_cast<std::size_t>(c.get("index"));
  const double tol = c.get("tol");
  require(n >= 1, "csbp_limit_laplace needs index >= 1");
  const auto g = OffspringDistribution::geometric_half();
  double worst = 0.0;
  for (double t : {0.5, 1.0, 2.0})
    for (double lambda : {0.5, 1.0, 2.0}) {
      const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * t));
      const double f = gw_laplace_iterate(g, k, std::exp(-lambda / static_cast<double>(n)));
      const double lhs = std::pow(f, static_cast<double>(n));
      const double rhs = std::exp(-lambda / (1.0 + lambda * t));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  return bound(worst, worst <= tol, 9, "max_error=" + fmt(worst));
}

inline CheckReport levy_height_tail(const Ctx& c) {
  const auto n = static_cast<std::size_t>(c.get("index"));
  const double a = c.get("a_cond");
  const double censor = a * c.get("censor");
  const ApproxLevyHeightSampler draw(LevyFamily::quadratic(), n, a, censor);
  const auto hs = replicas(c, c.n, 0, [&](Rng& rng) { return draw(rng).height; });
  auto cdf = [&](double x) { return x < a ? 0.0 : (x >= censor ? 1.0 : 1.0 - a / x); };
  auto left = [&](double x) { return x <= a ? 0.0 : 1.0 - a / std::min(x, censor); };
  const auto ks = ks_test(hs, cdf, left);
  return statistical(ks.statistic, ks.p_value, c, c.n, "");
}

inline CheckReport discretisation_4eps(const Ctx& c) {
  const auto p = c.finite();
  const std::vector<double> grid{0.05, 0.1, 0.2};
  const auto cross_limit = static_cast<std::size_t>(c.get("cross_checks"));
  struct Out {
    std::size_t violations = 0, crossed = 0, cross_fail = 0;
    double worst = 0.0;  // largest bound / eps
  };
  const auto res = parallel_map(c.n, [&](std::size_t i) {
    Rng rng(c.seed.derive(0).derive(i));
    const MarkedTree tr = sample_finite_theta_above(p, grid.back(), rng);
    Out o;
    for (double eps : grid) {
      const auto [d, b] = discretisation_witness(tr, eps);
      o.worst = std::max(o.worst, b / eps);
      if (b > 4.0 * eps) ++o.violations;
      if (i < cross_limit) {
        try {
          const auto br = gh_bracket_small(tr, d.skeleton, 2.0 * eps);
          ++o.crossed;
          if (br.lower > b + 1e-12) ++o.cross_fail;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::instance_too_large) throw;
        }
      }
    }
    return o;
  });
  Out tot;
  for (const auto& o : res) {
    tot.violations += o.violations;
    tot.crossed += o.crossed;
    tot.cross_fail += o.cross_fail;
    tot.worst = std::max(tot.worst, o.worst);
  }
  const bool ok = tot.violations == 0 && tot.cross_fail == 0;
  return bound(tot.worst, ok, c.n,
               "violations=" + std::to_string(tot.violations) + " bracket_checks=" + std::to_string(tot.crossed) +
                   " bracket_failures=" + std::to_string(tot.cross_fail));
}

// All ordered trees with at most max_size nodes, as preorder child counts.
inline void enumerate_ordered(std::size_t max_size, std::vector<std::uint32_t>& cur, long pending,
                              std::vector<std::vector<std::uint32_t>>& out) {
  if (pending == 0) {
    out.push_back(cur);
    return;
  }
  const long room = static_cast<long>(max_size) - static_cast<long>(cur.size());
  for (long k = 0; pending - 1 + k <= room - 1; ++k) {
    cur.push_back(static_cast<std::uint32_t>(k));
    enumerate_ordered(max_size, cur, pending - 1 + k, out);
    cur.pop_back();
  }
}

inline CheckReport gw_embedding(const Ctx& c) {
  const auto p = c.finite();
  const double eps = c.get("eps");
  require(eps > 0.0, "gw_embedding needs eps > 0");
  const auto mu = finite_mu_eps(p, eps);
  std::vector<std::vector<std::uint32_t>> shapes;
  std::vector<std::uint32_t> cur;
  enumerate_ordered(static_cast<std::size_t>(c.get("max_shape")), cur, 1, shapes);
  std::map<std::vector<std::uint32_t>, std::size_t> cell;
  std::vector<double> probs;
  const double n = static_cast<double>(c.n);
  for (const auto& s : shapes) {
    double pr = 1.0;
    for (auto k : s) pr *= k < mu.size() ? mu[k] : 0.0;
    if (pr * n >= 5.0) {
      cell[s] = probs.size();
      probs.push_back(pr);
    }
  }
  double kept = 0.0;
  for (double x : probs) kept += x;
  const std::size_t other = probs.size();
  probs.push_back(std::max(0.0, 1.0 - kept));
  const auto idx = replicas(c, c.n, 0, [&](Rng& rng) {
    const MarkedTree tr = sample_finite_theta_above(p, eps, rng);
    const OrderedTree th = uniform_ordering(xi_epsilon(tr, eps), rng);
    const auto it = cell.find(th.child_counts());
    return it == cell.end() ? other : it->second;
  });
  std::vector<std::uint64_t> obs(probs.size(), 0);
  for (auto i : idx) ++obs[i];
  const auto r = chi2_test(obs, probs);
  return statistical(r.statistic, r.p_value, c, c.n, "cells=" + std::to_string(probs.size()) + " df=" + fmt(r.df));
}

struct CheckInfo {
  std::string name;
  std::size_t default_samples;
  bool finite_case;
  /// Default gamma for finite-case checks, as gamma_k entries.
  std::map<std::string, double> defaults;
  CheckReport (*run)(const Ctx&);
  /// Reduced sample size and parameter overrides for calibration runs;
  /// calibration_samples == 0 marks an exact or deterministic check.
  std::size_t calibration_samples;
  std::map<std::string, double> calibration_params;
};

inline const std::map<std::string, double>& default_gamma() {
  static const std::map<std::string, double> g{{"gamma_0", 0.6}, {"gamma_2", 0.3}, {"gamma_3", 0.1}};
  return g;
}

inline std::map<std::string, double> with_gamma(std::map<std::string, double> m,
                                                const std::map<std::string, double>& g = default_gamma()) {
  m.insert(g.begin(), g.end());
  m.emplace("a", 1.0);
  return m;
}

inline const std::vector<CheckInfo>& registry() {
  static const std::map<std::string, double> binary{{"gamma_0", 0.5}, {"gamma_2", 0.5}};
  static const std::vector<CheckInfo> r{
      {"binomial_slicing", 100000, true, with_gamma({{"t", 0.5}, {"a_level", 0.25}, {"b_level", 0.5}}, binary),
       &binomial_slicing, 5000, {}},
      {"regenerative_R", 100000, true, with_gamma({{"t", 0.5}, {"h", 0.25}}), &regenerative_R, 5000, {}},
      {"exp_first_branch", 100000, true, with_gamma({}), &exp_first_branch, 5000, {}},
      {"offspring_at_J", 100000, true, with_gamma({}), &offspring_at_J, 5000, {}},
      {"subtrees_iid_at_J", 100000, true, with_gamma({}), &subtrees_iid_at_J, 5000, {}},
      {"poisson_forest_gw", 10000, true, with_gamma({{"eps", 0.25}}), &poisson_forest_gw, 2000, {}},
      {"mean_bound_vh", 100000, true, with_gamma({{"t", 0.5}, {"h", 0.25}}), &mean_bound_vh, 5000, {}},
      {"mu_eps_sandwich", 10000, true, with_gamma({}), &mu_eps_sandwich, 2000, {}},
      {"local_time_limit", 10000, true, with_gamma({{"t", 0.5}, {"levy_n", 200}, {"h0", 0.4}, {"h_steps", 4}}),
       &local_time_limit, 2000, {{"levy_n", 100}}},
      {"N_equals_L", 10000, true, with_gamma({{"levels", 20}}), &N_equals_L, 0, {}},
      {"csbp_limit_laplace", 100, false, {{"index", 2000}, {"tol", 0.01}}, &csbp_limit_laplace, 0, {}},
      {"levy_height_tail", 10000, false, {{"index", 500}, {"a_cond", 1.0}, {"censor", 1000.0}}, &levy_height_tail,
       1000, {{"index", 100}}},
      {"discretisation_4eps", 1000, true, with_gamma({{"cross_checks", 200}}), &discretisation_4eps, 0, {}},
      {"gw_embedding", 20000, true, with_gamma({{"eps", 0.25}, {"max_shape", 7}}), &gw_embedding, 5000, {}},
  };
  return r;
}

inline const CheckInfo& find_check(const std::string& name) {
  for (const auto& c : registry())
    if (c.name == name) return c;
  throw Error(ErrorKind::invalid_argument, "unknown check: " + name);
}

}  // namespace verify_detail

/// Names of all registered checks in suite order.
inline std::vector<std::string> check_names() {
  std::vector<std::string> out;
  for (const auto& c : verify_detail::registry()) out.push_back(c.name);
  return out;
}

/// Default parameters of a check (finite-case checks include a and gamma_k).
inline std::map<std::string, double> check_defaults(const std::string& name) {
  return verify_detail::find_check(name).defaults;
}

inline bool is_statistical(const std::string& name) { return verify_detail::find_check(name).calibration_samples > 0; }

inline CheckReport run_check(const CheckSpec& spec) {
  using namespace verify_detail;
  const CheckInfo& info = find_check(spec.name);
  require(spec.significance > 0.0 && spec.significance < 1.0, "significance must lie in (0, 1)");
  Ctx ctx;
  ctx.n = spec.n_samples == 0 ? info.default_samples : spec.n_samples;
  require(ctx.n >= 100, "a check needs at least 100 samples");
  ctx.seed = spec.seed;
  ctx.significance = spec.significance;
  ctx.params = info.defaults;
  bool gamma_given = false;
  for (const auto& [k, v] : spec.params) gamma_given = gamma_given || k.rfind("gamma_", 0) == 0;
  if (gamma_given) {
    for (auto it = ctx.params.begin(); it != ctx.params.end();)
      it = it->first.rfind("gamma_", 0) == 0 ? ctx.params.erase(it) : std::next(it);
  }
  for (const auto& [k, v] : spec.params) {
    const bool gamma_key = info.finite_case && k.size() == 7 && k.rfind("gamma_", 0) == 0 && std::isdigit(k[6]);
    if (!gamma_key && !info.defaults.count(k)) {
      throw Error(ErrorKind::invalid_argument, "unknown parameter '" + k + "' for check " + spec.name);
    }
    require(std::isfinite(v), "parameter '" + k + "' must be finite");
    ctx.params[k] = v;
  }
  const auto start = std::chrono::steady_clock::now();
  CheckReport r = info.run(ctx);
  r.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.name = spec.name;
  return r;
}

/// One spec per registered check with default parameters.
inline std::vector<CheckSpec> default_suite(RngState seed) {
  std::vector<CheckSpec> out;
  for (const auto& name : check_names()) out.push_back({name, {}, 0, seed, 1e-3});
  return out;
}

/// A statistical check at its reduced calibration size.
inline CheckSpec calibration_spec(const std::string& name, RngState seed) {
  const auto& info = verify_detail::find_check(name);
  require(info.calibration_samples > 0, name + " is not a statistical check");
  return {name, info.calibration_params, info.calibration_samples, seed, 1e-3};
}

inline void write_reports_csv(std::ostream& out, const std::vector<CheckReport>& reports) {
  out << "name,statistic,p_value,pass,runtime,samples\n";
  out.precision(10);
  for (const auto& r : reports) {
    out << r.name << ',' << r.statistic << ',' << r.p_value << ',' << (r.pass ? "true" : "false") << ','
        << r.runtime << ',' << r.samples_used << '\n';
  }
}

}  // namespace regentree
