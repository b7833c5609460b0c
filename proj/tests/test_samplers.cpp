#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "oracles.hpp"
#include "regentree/regentree.hpp"

using namespace regentree;

namespace {

const OffspringDistribution kBinary = OffspringDistribution::binary(0.5);

double binom_sd(double p, double n) { return std::sqrt(p * (1 - p) / n); }

// Height distribution of the GW tree given height >= hmin, cells hmin, ...,
// last-1 and a tail cell, from the generating-function iterates.
std::vector<double> height_cells(const OffspringDistribution& g, std::size_t hmin, std::size_t last) {
  std::vector<double> f(last + 2);
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = oracle::pgf_iterate(g.pmf_table(), j, 0.0);
  const double tail = 1.0 - f[hmin];
  std::vector<double> p;
  for (std::size_t j = hmin; j < last; ++j) p.push_back((f[j + 1] - f[j]) / tail);
  p.push_back((1.0 - f[last]) / tail);
  return p;
}

// Draw with a node cap, retrying on overflow. Only for statistics that do not
// depend on the size of the tree beyond the cap.
template <typename Draw>
auto retry_on_cap(Draw draw) {
  for (;;) {
    try {
      return draw();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::cap_exceeded) throw;
    }
  }
}

}  // namespace

TEST(GwTree, DegenerateAndSmallProbabilities) {
  Rng rng(50, 0);
  const OffspringDistribution dirac({1.0});
  for (int k = 0; k < 10; ++k) EXPECT_EQ(sample_gw_tree(dirac, rng).size(), 1u);

  constexpr int n = 100000;
  int single = 0, three = 0;
  for (int k = 0; k < n; ++k) {
    // Trees above the cap count as neither size.
    try {
      const auto t = sample_gw_tree(kBinary, rng, 1000);
      single += t.size() == 1;
      three += t.size() == 3;
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::cap_exceeded);
    }
  }
  EXPECT_NEAR(single / double(n), 0.5, 3 * binom_sd(0.5, n));
  EXPECT_NEAR(three / double(n), 0.125, 3 * binom_sd(0.125, n));
}

TEST(GwTree, RootDegreeMatchesPmf) {
  Rng rng(51, 0);
  const OffspringDistribution g({0.55, 0.2, 0.1, 0.1, 0.05});
  std::vector<std::uint64_t> root(5, 0);
  for (int k = 0; k < 50000; ++k) ++root[sample_gw_tree(g, rng).child_count(0)];
  EXPECT_GT(chi2_test(root, g.pmf_table()).p_value, 1e-3);
}

TEST(GwTree, CapAndSupercritical) {
  Rng rng(52, 0);
  EXPECT_THROW(sample_gw_tree(OffspringDistribution({0.2, 0.0, 0.8}), rng), Error);
  bool hit = false;
  for (int k = 0; k < 1000 && !hit; ++k) {
    try {
      sample_gw_tree(kBinary, rng, 50);
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::cap_exceeded);
      hit = true;
    }
  }
  EXPECT_TRUE(hit);
}

TEST(GwTreeConditioned, Examples) {
  Rng rng(53, 0);
  // hmin = 0 is the unconditioned law.
  const OffspringDistribution sub = OffspringDistribution::binary(0.6);
  int single = 0;
  for (int k = 0; k < 20000; ++k) single += sample_gw_tree_cond_height(sub, 0, rng).size() == 1;
  EXPECT_NEAR(single / 20000.0, 0.6, 3 * binom_sd(0.6, 20000));
  for (int k = 0; k < 1000; ++k) {
    EXPECT_EQ(retry_on_cap([&] { return sample_gw_tree_cond_height(kBinary, 1, rng, 1000, 10000); }).child_count(0), 2u);
    EXPECT_EQ(sample_gw_tree_conditioned(kBinary, 1, rng, kDefaultTreeCap, 30).child_count(0), 2u);
  }
  EXPECT_THROW(sample_gw_tree_cond_height(kBinary, 1000, rng, 10), Error);
}

TEST(GwTreeConditioned, HeightRatioMatchesIterates) {
  Rng rng(54, 0);
  constexpr int n = 20000;
  const OffspringDistribution g({0.55, 0.1, 0.3, 0.05});
  for (std::size_t h : {2, 5}) {
    int above = 0;
    for (int k = 0; k < n; ++k) above += sample_gw_tree_cond_height(g, h, rng).max_depth() >= h + 1;
    const double f_h = gw_laplace_iterate(g, h, 0.0), f_h1 = gw_laplace_iterate(g, h + 1, 0.0);
    const double ratio = (1 - f_h1) / (1 - f_h);
    EXPECT_NEAR(above / double(n), ratio, 3 * binom_sd(ratio, n));
  }
}

TEST(GwTreeConditioned, ExactSamplerHeightLaw) {
  Rng rng(55, 0);
  for (const auto& g : {kBinary, OffspringDistribution({0.6, 0.0, 0.3, 0.1})}) {
    for (std::size_t hmin : {1, 4, 12}) {
      const std::size_t last = hmin + 15;
      std::vector<std::uint64_t> cells(last - hmin + 1, 0);
      for (int k = 0; k < 20000; ++k) {
        // Cutting at generation `last` leaves the tail cell intact.
        const auto t = sample_gw_tree_conditioned(g, hmin, rng, kDefaultTreeCap, last);
        ASSERT_GE(t.max_depth(), hmin);
        ++cells[std::min(t.max_depth(), last) - hmin];
      }
      EXPECT_GT(chi2_test(cells, height_cells(g, hmin, last)).p_value, 1e-3) << hmin;
    }
  }
}

TEST(GwTreeConditioned, ExactSamplerMatchesRejectionShape) {
  // Root degree and total size classes under both samplers.
  Rng rng(56, 0);
  const OffspringDistribution g({0.55, 0.1, 0.3, 0.05});
  const std::size_t hmin = 3;
  std::vector<std::vector<std::uint64_t>> table(2, std::vector<std::uint64_t>(8, 0));
  for (int k = 0; k < 20000; ++k) {
    const auto a = sample_gw_tree_conditioned(g, hmin, rng);
    const auto b = sample_gw_tree_cond_height(g, hmin, rng);
    ++table[0][std::min<std::size_t>(a.child_count(0), 3) + 4 * (a.size() > 12)];
    ++table[1][std::min<std::size_t>(b.child_count(0), 3) + 4 * (b.size() > 12)];
  }
  EXPECT_GT(chi2_independence(table).p_value, 1e-3);
}

TEST(GwTree, BranchingPropertyIndependence) {
  Rng rng(57, 0);
  std::vector<std::vector<std::uint64_t>> table(4, std::vector<std::uint64_t>(4, 0));
  int kept = 0;
  const OffspringDistribution g = OffspringDistribution::binary(0.55);
  while (kept < 30000) {
    const auto t = sample_gw_tree(g, rng);
    if (t.child_count(0) != 2) continue;
    const auto h1 = shift(t, LabelPath{{1}}).max_depth(), h2 = shift(t, LabelPath{{2}}).max_depth();
    ++table[std::min<std::size_t>(h1, 3)][std::min<std::size_t>(h2, 3)];
    ++kept;
  }
  EXPECT_GT(chi2_independence(table).p_value, 1e-3);
}

TEST(GwProcess, Examples) {
  Rng rng(58, 0);
  EXPECT_EQ(sample_gw_process(OffspringDistribution({1.0}), 5, 4, rng), (std::vector<std::uint64_t>{5, 0, 0, 0, 0}));
  CompensatedSum mean;
  constexpr int reps = 2000;
  for (int k = 0; k < reps; ++k) mean.add(static_cast<double>(sample_gw_process(kBinary, 1000, 1, rng)[1]));
  EXPECT_NEAR(mean.value() / reps, 1000.0, 3 * std::sqrt(1000.0 / reps));
  int extinct = 0;
  for (int k = 0; k < 10000; ++k) extinct += sample_gw_process(kBinary, 1, 200, rng).back() == 0;
  EXPECT_GE(extinct / 10000.0, 0.98);

  // Geometric offspring uses a negative binomial sum; compare the variance.
  CompensatedSum s, s2;
  for (int k = 0; k < reps; ++k) {
    const auto x = static_cast<double>(sample_gw_process(OffspringDistribution::geometric_half(), 500, 1, rng)[1]);
    s.add(x);
    s2.add(x * x);
  }
  const double m = s.value() / reps, var = s2.value() / reps - m * m;
  EXPECT_NEAR(m, 500.0, 3 * std::sqrt(1000.0 / reps));
  EXPECT_NEAR(var / 1000.0, 1.0, 0.15);
}

TEST(GwProcess, BinomialPathMatchesDirectSum) {
  // x > 32 with a small support draws successive binomials.
  Rng rng(59, 0);
  const OffspringDistribution g({0.6, 0.0, 0.3, 0.1});
  CompensatedSum s, s2;
  constexpr int reps = 5000;
  for (int k = 0; k < reps; ++k) {
    const auto x = static_cast<double>(offspring_sum(g, 100, rng));
    s.add(x);
    s2.add(x * x);
  }
  const double m = s.value() / reps, var = s2.value() / reps - m * m;
  EXPECT_NEAR(m, 90.0, 3 * std::sqrt(100 * g.variance() / reps));
  EXPECT_NEAR(var / (100 * g.variance()), 1.0, 0.1);
}

TEST(FiniteTheta, RootEdgeAndOffspring) {
  Rng rng(60, 0);
  const FiniteThetaParams p{2.0, OffspringDistribution({0.6, 0.0, 0.3, 0.1})};
  std::vector<double> roots;
  std::vector<std::uint64_t> kids(4, 0);
  for (int k = 0; k < 20000; ++k) {
    const auto t = sample_finite_theta(p, rng);
    roots.push_back(t.length(0));
    ++kids[subtrees_above(t, t.length(0)).size()];
  }
  EXPECT_GT(ks_test(roots, [](double x) { return -std::expm1(-2.0 * x); }).p_value, 1e-3);
  EXPECT_EQ(kids[1], 0u);
  EXPECT_GT(chi2_test({kids[0], kids[2], kids[3]}, {0.6, 0.3, 0.1}).p_value, 1e-3);

  const FiniteThetaParams dirac{1.0, OffspringDistribution({1.0})};
  const auto seg = sample_finite_theta(dirac, rng);
  EXPECT_EQ(seg.size(), 1u);
  EXPECT_GT(seg.length(0), 0.0);
}

TEST(FiniteTheta, TruncationAndConditioning) {
  Rng rng(61, 0);
  const FiniteThetaParams p{1.0, kBinary};
  for (int k = 0; k < 500; ++k) {
    const auto t = sample_finite_theta(p, rng, kDefaultTreeCap, 1.5);
    EXPECT_LE(t.height(), 1.5 + 1e-12);
    EXPECT_GT(sample_finite_theta_above(p, 0.7, rng, kDefaultTreeCap, 5.0).height(), 0.7);
  }
  // Height tail matches v(t) = 2 / (2 + t), with an atom at the cut level.
  const double cut = 40.0;
  std::vector<double> hs;
  for (int k = 0; k < 20000; ++k) hs.push_back(sample_finite_theta(p, rng, kDefaultTreeCap, cut).height());
  const auto cdf = [&](double x) { return x >= cut ? 1.0 : 1.0 - 2.0 / (2.0 + x); };
  const auto left = [&](double x) { return x >= cut ? 1.0 - 2.0 / (2.0 + cut) : cdf(x); };
  EXPECT_GT(ks_test(hs, cdf, left).p_value, 1e-3);
}

TEST(ApproxLevy, QuadraticHeightTail) {
  Rng rng(62, 0);
  const auto t = retry_on_cap([&] { return sample_approx_levy_tree(LevyFamily::quadratic(), 50, 1.0, rng, 100000); });
  EXPECT_GE(t.height(), 1.0 - 1e-12);
  EXPECT_EQ(t.length(0), 0.0);
  EXPECT_NEAR(t.length(1), 0.02, 1e-15);
  EXPECT_THROW(sample_approx_levy_tree(LevyFamily::quadratic(), 5, 1.0, rng), Error);

  // At t = a the conditional tail is 1.
  std::vector<double> hs;
  for (int k = 0; k < 4000; ++k) {
    const auto h = sample_approx_levy_height(LevyFamily::quadratic(), 100, 1.0, rng, 1000.0);
    EXPECT_GE(h.height, 1.0);
    hs.push_back(h.height);
  }
  int above2 = 0;
  for (double h : hs) above2 += h > 2.0;
  EXPECT_NEAR(above2 / 4000.0, 0.5, 3 * binom_sd(0.5, 4000) + 0.02);
}

TEST(ApproxLevy, TreeAndHeightSamplersAgree) {
  Rng rng(63, 0);
  const std::size_t n = 20;
  std::vector<std::uint64_t> a(6, 0), b(6, 0);
  for (int k = 0; k < 5000; ++k) {
    const auto t = sample_approx_levy_tree(LevyFamily::quadratic(), n, 0.5, rng, kDefaultTreeCap, 3.0);
    const auto h = sample_approx_levy_height(LevyFamily::quadratic(), n, 0.5, rng, 3.0);
    auto cell = [](double x) { return std::min<std::size_t>(static_cast<std::size_t>(std::floor(2.0 * x + 1e-9)) - 1, 5); };
    ++a[cell(t.height())];
    ++b[cell(h.height)];
  }
  EXPECT_GT(chi2_independence({a, b}).p_value, 1e-3);
}

TEST(ApproxLevy, StableTailSlope) {
  const auto fam = LevyFamily::stable(1.5);
  const auto g = fam.offspring();
  // Exact generation-height tail 1 - f_k(0) of the sampled law.
  std::vector<double> tail{1.0};
  for (double f = 0.0; tail.size() <= 401;) tail.push_back(1.0 - (f = g.pgf(f)));

  // Log-log slope of the conditional tail at m_n = 100 against -1/(alpha-1).
  const std::size_t m = fam.scale(10000);
  ASSERT_EQ(m, 100u);
  std::vector<double> xs, ys;
  for (double t : {1.5, 2.0, 3.0, 4.0}) {
    const auto k = static_cast<std::size_t>(std::ceil(t * m));
    xs.push_back(std::log(static_cast<double>(k) / m));
    ys.push_back(std::log(tail[k] / tail[m]));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / xs.size(), my += ys[i] / ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
  EXPECT_NEAR(sxy / sxx, -2.0, 0.15);

  // Both samplers follow that law at m_n = 5: generations 5..19 and a tail cell.
  Rng rng(64, 0);
  const std::size_t n = 25, lo = 5, hi = 20;
  ASSERT_EQ(fam.scale(n), lo);
  std::vector<double> probs;
  for (std::size_t k = lo; k < hi; ++k) probs.push_back((tail[k] - tail[k + 1]) / tail[lo]);
  probs.push_back(tail[hi] / tail[lo]);
  std::vector<std::uint64_t> by_height(probs.size(), 0), by_tree(probs.size(), 0);
  const ApproxLevyHeightSampler heights(fam, n, 1.0, 4.0);
  const ApproxLevyTreeSampler trees(fam, n, 1.0, 4.0);
  for (int k = 0; k < 20000; ++k) {
    const auto h = heights(rng);
    ++by_height[static_cast<std::size_t>(std::llround(h.height * lo)) - lo];
    const auto t = trees(rng);
    ++by_tree[t.shape().max_depth() - lo];
  }
  EXPECT_GT(chi2_test(by_height, probs).p_value, 1e-3);
  EXPECT_GT(chi2_test(by_tree, probs).p_value, 1e-3);
}

TEST(Dyck, Examples) {
  Rng rng(65, 0);
  const auto one = sample_dyck_excursion(1, rng);
  ASSERT_EQ(one.size(), 3u);
  EXPECT_EQ(one.max_value(), 1.0);
  int uudd = 0;
  constexpr int n = 20000;
  for (int k = 0; k < n; ++k) uudd += sample_dyck_excursion(2, rng).max_value() > 1.0;
  EXPECT_NEAR(uudd / double(n), 0.5, 3 * binom_sd(0.5, n));
  for (int k = 0; k < 200; ++k) {
    const auto g = sample_dyck_excursion(1 + rng.below(300), rng);
    for (const auto& b : g.breakpoints()) EXPECT_GE(b.g, 0.0);
    EXPECT_NEAR(g.zeta(), 1.0, 1e-12);
    EXPECT_EQ(tree_from_excursion(g).height(), g.max_value());
  }
  EXPECT_THROW(sample_dyck_excursion(0, rng), Error);
}

TEST(Dyck, UniformOverCatalanPaths) {
  Rng rng(66, 0);
  std::map<std::vector<double>, std::uint64_t> seen;
  for (int k = 0; k < 28000; ++k) {
    std::vector<double> key;
    for (const auto& b : sample_dyck_excursion(4, rng).breakpoints()) key.push_back(b.g);
    ++seen[key];
  }
  ASSERT_EQ(seen.size(), 14u);
  std::vector<std::uint64_t> counts;
  for (auto& [k, c] : seen) counts.push_back(c);
  EXPECT_GT(chi2_test(counts, std::vector<double>(14, 1.0 / 14)).p_value, 1e-3);
}

TEST(Dsbp, Examples) {
  Rng rng(67, 0);
  const FiniteThetaParams p{1.5, kBinary};
  const auto zero = sample_dsbp_path(p, 0, 10.0, rng);
  EXPECT_EQ(zero.at(5.0), 0u);
  EXPECT_EQ(zero.time.size(), 1u);

  std::vector<double> first;
  for (int k = 0; k < 20000; ++k) {
    const auto path = sample_dsbp_path(p, 1, 100.0, rng);
    ASSERT_GE(path.time.size(), 2u);
    first.push_back(path.time[1]);
  }
  EXPECT_GT(ks_test(first, [](double x) { return -std::expm1(-1.5 * x); }).p_value, 1e-3);
}

TEST(Dsbp, ExtinctionTimeLaw) {
  Rng rng(68, 0);
  const FiniteThetaParams p{1.0, kBinary};
  const double horizon = 200.0;
  std::vector<double> death;
  for (int k = 0; k < 20000; ++k) {
    const auto path = sample_dsbp_path(p, 1, horizon, rng);
    death.push_back(path.extinct() ? path.time.back() : horizon);
  }
  const auto cdf = [&](double t) { return t >= horizon ? 1.0 : 1.0 - 2.0 / (2.0 + t); };
  const auto left = [&](double t) { return t >= horizon ? 1.0 - 2.0 / (2.0 + horizon) : cdf(t); };
  EXPECT_GT(ks_test(death, cdf, left).p_value, 1e-3);
}

TEST(PoissonForest, Counts) {
  Rng rng(69, 0);
  EXPECT_TRUE(sample_poisson_forest([](Rng&) { return MarkedTree{}; }, 0.0, rng).empty());
  EXPECT_THROW(sample_poisson_forest([](Rng&) { return MarkedTree{}; }, -1.0, rng), Error);

  const FiniteThetaParams p{1.0, OffspringDistribution({0.6, 0.0, 0.3, 0.1})};
  const double delta = 0.25, v = dsbp_extinction_ode(p, delta);
  std::vector<std::uint64_t> counts(8, 0);
  for (int k = 0; k < 10000; ++k) {
    const auto f = sample_finite_poisson_forest(p, delta, rng);
    for (const auto& t : f) ASSERT_GT(t.height(), delta);
    ++counts[std::min<std::size_t>(f.size(), 7)];
  }
  std::vector<double> probs(8);
  boost::math::poisson_distribution<double> pois(v);
  for (std::size_t k = 0; k < 7; ++k) probs[k] = boost::math::pdf(pois, static_cast<double>(k));
  probs[7] = boost::math::cdf(boost::math::complement(pois, 6.0));
  EXPECT_GT(chi2_test(counts, probs).p_value, 1e-3);

  CompensatedSum n;
  for (int k = 0; k < 3000; ++k) n.add(static_cast<double>(sample_levy_poisson_forest(LevyFamily::quadratic(), 10, 0.5, rng, 5.0).size()));
  EXPECT_NEAR(n.value() / 3000, 2.0, 3 * std::sqrt(2.0 / 3000));
}

TEST(Reproducibility, SameStateSameSamples) {
  const FiniteThetaParams p{1.0, kBinary};
  for (std::uint64_t stream = 0; stream < 20; ++stream) {
    Rng a(RngState{99, stream}), b(RngState{99, stream});
    EXPECT_EQ(sample_finite_theta(p, a, kDefaultTreeCap, 20.0), sample_finite_theta(p, b, kDefaultTreeCap, 20.0));
    EXPECT_EQ(sample_gw_tree_conditioned(kBinary, 5, a, kDefaultTreeCap, 40), sample_gw_tree_conditioned(kBinary, 5, b, kDefaultTreeCap, 40));
    EXPECT_EQ(sample_dyck_excursion(30, a).breakpoints().back().s, sample_dyck_excursion(30, b).breakpoints().back().s);
  }
  Rng c(RngState{99, 0}), d(RngState{99, 1});
  EXPECT_NE(serialize_tree(sample_finite_theta(p, c, kDefaultTreeCap, 20.0)), serialize_tree(sample_finite_theta(p, d, kDefaultTreeCap, 20.0)));
}

TEST(Reproducibility, ParallelMapIndependentOfWorkers) {
  const FiniteThetaParams p{1.0, kBinary};
  const RngState base{123, 0};
  auto run = [&] {
    return parallel_map(200, [&](std::size_t i) {
      Rng r(base.derive(i));
      return serialize_tree(sample_finite_theta(p, r, kDefaultTreeCap, 20.0));
    });
  };
  setenv("REGENTREE_THREADS", "1", 1);
  const auto one = run();
  setenv("REGENTREE_THREADS", "4", 1);
  const auto four = run();
  unsetenv("REGENTREE_THREADS");
  EXPECT_EQ(one, four);
}
