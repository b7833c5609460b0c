#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "regentree/regentree.hpp"

using namespace regentree;

namespace {

Excursion triangle() { return Excursion({{0, 0}, {1, 1}, {2, 0}}); }

// Random excursion on a random time grid; repeated values produce plateaus.
Excursion random_excursion(Rng& rng) {
  const std::size_t n = 3 + rng.below(40);
  std::vector<Breakpoint> pts{{0.0, 0.0}};
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    s += 0.05 + rng.uniform();
    const double g = rng.bernoulli(0.2) ? pts.back().g : (rng.bernoulli(0.1) ? 0.0 : std::floor(8.0 * rng.uniform()) / 4.0);
    pts.push_back({s, g});
  }
  pts.push_back({s + 1.0, 0.0});
  return Excursion(std::move(pts));
}

// Critical GW tree conditioned on at most 500 nodes.
MarkedTree gw_marked(Rng& rng) {
  OrderedTree shape;
  for (;;) {
    try {
      shape = sample_gw_tree(OffspringDistribution::geometric_half(), rng, 500);
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::cap_exceeded) throw;
    }
  }
  std::vector<double> lens(shape.size());
  for (auto& h : lens) h = rng.uniform_pos();
  lens[0] = rng.bernoulli(0.5) ? 0.0 : lens[0];
  return MarkedTree(shape, std::move(lens));
}

}  // namespace

TEST(PseudoDistance, Examples) {
  const auto g = triangle();
  EXPECT_DOUBLE_EQ(pseudo_distance(g, 0.5, 1.5), 0.0);
  EXPECT_EQ(pseudo_distance(g, 0.7, 0.7), 0.0);
  EXPECT_DOUBLE_EQ(pseudo_distance(g, 0.0, 1.0), 1.0);
  EXPECT_THROW(pseudo_distance(g, -0.1, 1.0), Error);
  EXPECT_THROW(pseudo_distance(g, 0.0, 2.5), Error);
}

TEST(PseudoDistance, SymmetricAndTriangle) {
  Rng rng(4, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto g = random_excursion(rng);
    for (int k = 0; k < 200; ++k) {
      const double a = rng.uniform() * g.zeta(), b = rng.uniform() * g.zeta(), c = rng.uniform() * g.zeta();
      EXPECT_EQ(pseudo_distance(g, a, b), pseudo_distance(g, b, a));
      EXPECT_GE(pseudo_distance(g, a, b), 0.0);
      EXPECT_LE(pseudo_distance(g, a, c), pseudo_distance(g, a, b) + pseudo_distance(g, b, c) + 1e-12);
    }
  }
}

TEST(Excursion, RejectsInvalid) {
  EXPECT_THROW(Excursion({{0, 0}}), Error);
  EXPECT_THROW(Excursion({{0, 0}, {1, 1}}), Error);
  EXPECT_THROW(Excursion({{0, 0}, {1, -1}, {2, 0}}), Error);
  EXPECT_THROW(Excursion({{0, 0}, {1, 1}, {1, 0}}), Error);
  EXPECT_THROW(Excursion({{0.5, 0}, {1, 1}, {2, 0}}), Error);
  EXPECT_THROW(tree_from_excursion(Excursion({{0, 0}, {1, 0}})), Error);
}

TEST(TreeFromExcursion, Examples) {
  EXPECT_EQ(metric_canonical_key(tree_from_excursion(triangle())), metric_canonical_key(MarkedTree::segment(1.0)));

  const Excursion m({{0, 0}, {1, 2}, {1.5, 1}, {2, 3}, {3, 0}});
  const MarkedTree expect_m(OrderedTree({2, 0, 0}), {1.0, 1.0, 2.0});
  EXPECT_EQ(metric_canonical_key(tree_from_excursion(m)), metric_canonical_key(expect_m));

  const Excursion w({{0, 0}, {1, 1}, {2, 0}, {3, 1}, {4, 0}});
  const MarkedTree expect_w(OrderedTree({2, 0, 0}), {0.0, 1.0, 1.0});
  EXPECT_EQ(metric_canonical_key(tree_from_excursion(w)), metric_canonical_key(expect_w));
}

TEST(TreeFromExcursion, PlateauMergesIntoOneBranchPoint) {
  const Excursion g({{0, 0}, {1, 1}, {2, 0.5}, {3, 0.5}, {4, 1}, {5, 0.5}, {6, 2}, {7, 0}});
  const auto t = tree_from_excursion(g);
  // One vertex at level 0.5 carrying three legs.
  const MarkedTree expect(OrderedTree({3, 0, 0, 0}), {0.5, 0.5, 0.5, 1.5});
  EXPECT_EQ(metric_canonical_key(t), metric_canonical_key(expect));
}

TEST(TreeFromExcursion, QuotientDistances) {
  Rng rng(6, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const auto g = random_excursion(rng);
    if (g.max_value() == 0.0) continue;
    const auto coded = code_excursion(g);
    const TreeMetric metric(coded.tree);
    EXPECT_EQ(coded.tree.height(), g.max_value());
    for (int k = 0; k < 1000; ++k) {
      const double s = rng.uniform() * g.zeta(), t = rng.uniform() * g.zeta();
      const auto p = coded.point_at(g, s), q = coded.point_at(g, t);
      EXPECT_NEAR(level(coded.tree, p), g(s), 1e-12);
      EXPECT_NEAR(metric.distance(p, q), pseudo_distance(g, s, t), 1e-12);
      EXPECT_NEAR(oracle::point_distance(coded.tree, p, q), pseudo_distance(g, s, t), 1e-12);
    }
  }
}

TEST(Contour, Examples) {
  const auto seg = contour_of(MarkedTree::segment(1.0));
  ASSERT_EQ(seg.size(), 3u);
  EXPECT_EQ(seg.breakpoints()[1].s, 1.0);
  EXPECT_EQ(seg.breakpoints()[1].g, 1.0);
  EXPECT_EQ(seg.zeta(), 2.0);

  const auto cherry = contour_of(MarkedTree(OrderedTree({2, 0, 0}), {0.0, 1.0, 1.0}));
  std::vector<std::pair<double, double>> got;
  for (const auto& b : cherry.breakpoints()) got.emplace_back(b.s, b.g);
  EXPECT_EQ(got, (std::vector<std::pair<double, double>>{{0, 0}, {1, 1}, {2, 0}, {3, 1}, {4, 0}}));
  EXPECT_THROW(contour_of(MarkedTree{}), Error);
}

TEST(Contour, RoundTripOnGwTrees) {
  Rng rng(8, 0);
  int done = 0;
  while (done < 100) {
    const MarkedTree t = gw_marked(rng);
    if (t.total_length() == 0.0) continue;
    const auto g = contour_of(t);
    EXPECT_NEAR(g.zeta(), 2.0 * t.total_length(), 1e-9);
    EXPECT_EQ(metric_canonical_key(tree_from_excursion(g)), metric_canonical_key(t));
    ++done;
  }
}

TEST(ExcursionIo, RoundTripAndHeader) {
  Rng rng(9, 0);
  const auto g = random_excursion(rng);
  std::stringstream ss;
  write_excursion(ss, g);
  const auto back = read_excursion(ss);
  ASSERT_EQ(back.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(back.breakpoints()[i].s, g.breakpoints()[i].s);
    EXPECT_EQ(back.breakpoints()[i].g, g.breakpoints()[i].g);
  }
  std::istringstream no_header("0,0\n1,1\n2,0\n");
  EXPECT_EQ(read_excursion(no_header).size(), 3u);
  std::istringstream bad("s,g\n0,0\nx\n");
  EXPECT_THROW(read_excursion(bad), Error);
  std::istringstream not_zero("0,0\n1,1\n");
  EXPECT_THROW(read_excursion(not_zero), Error);
}
