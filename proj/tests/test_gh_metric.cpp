#include <gtest/gtest.h>

#include "oracles.hpp"
#include "regentree/regentree.hpp"

using namespace regentree;

namespace {

MarkedTree small_tree(Rng& rng) {
  TreeBuilder b;
  b.add_root(rng.bernoulli(0.5) ? 0.0 : 0.5 * rng.uniform());
  const std::size_t n = 1 + rng.below(4);
  for (std::size_t i = 1; i < n; ++i) b.add_child(rng.below(b.size()), 0.1 + rng.uniform());
  return b.build_marked();
}

TreePoint random_point(Rng& rng, const MarkedTree& t) {
  const Index u = rng.below(t.size());
  return {u, rng.uniform() * t.length(u)};
}

// Minimal half-distortion over all correspondences between two small point
// sets that contain the root pair: each non-root point on either side picks
// one partner, every combination enumerated.
double brute_net_distance(const MarkedTree& a, const std::vector<TreePoint>& pa, const MarkedTree& b,
                          const std::vector<TreePoint>& pb) {
  auto dist = [](const MarkedTree& t, const TreePoint& p, const TreePoint& q) { return oracle::point_distance(t, p, q); };
  const std::size_t na = pa.size(), nb = pb.size();
  std::size_t combos = 1;
  for (std::size_t i = 1; i < na; ++i) combos *= nb;
  for (std::size_t j = 1; j < nb; ++j) combos *= na;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t code = 0; code < combos; ++code) {
    std::vector<std::pair<std::size_t, std::size_t>> rel{{0, 0}};
    std::size_t c = code;
    for (std::size_t i = 1; i < na; ++i, c /= nb) rel.emplace_back(i, c % nb);
    for (std::size_t j = 1; j < nb; ++j, c /= na) rel.emplace_back(c % na, j);
    double worst = 0.0;
    for (const auto& [i, j] : rel)
      for (const auto& [k, l] : rel) worst = std::max(worst, std::abs(dist(a, pa[i], pa[k]) - dist(b, pb[j], pb[l])));
    best = std::min(best, 0.5 * worst);
  }
  return best;
}

}  // namespace

TEST(TreeMetric, MatchesPathOverlapOracle) {
  Rng rng(10, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const MarkedTree t = oracle::random_tree(rng, 50);
    const TreeMetric m(t);
    for (int k = 0; k < 100; ++k) {
      const auto p = random_point(rng, t), q = random_point(rng, t);
      EXPECT_NEAR(m.distance(p, q), oracle::point_distance(t, p, q), 1e-12);
      EXPECT_NEAR(m.distance(p, q), m.distance(q, p), 1e-15);
      const Index w = m.lca(p.node, q.node);
      EXPECT_TRUE(w == p.node || t.shape().subtree_size(w) > p.node - w);
    }
  }
}

TEST(HalfDistortion, Examples) {
  const MarkedTree t(OrderedTree({2, 0, 0}), {0.0, 1.0, 2.0});
  Correspondence id;
  for (Index u = 0; u < t.size(); ++u) id.pairs.push_back({{u, t.length(u)}, {u, t.length(u)}});
  id.pairs.push_back({{0, 0.0}, {0, 0.0}});
  EXPECT_EQ(half_distortion(id, t, t), 0.0);

  const MarkedTree s1 = MarkedTree::segment(1.0), s2 = MarkedTree::segment(2.0);
  Correspondence lin;
  for (int k = 0; k <= 10; ++k) lin.pairs.push_back({{0, k / 10.0}, {0, k / 5.0}});
  EXPECT_NEAR(half_distortion(lin, s1, s2), 0.5, 1e-15);

  Correspondence collapse;
  for (int k = 0; k <= 10; ++k) collapse.pairs.push_back({{0, 0.0}, {0, k / 10.0}});
  EXPECT_NEAR(half_distortion(collapse, MarkedTree{}, s1), 0.5, 1e-15);

  Correspondence rootless{{{{0, 0.5}, {0, 1.0}}}};
  EXPECT_THROW(half_distortion(rootless, s1, s2), Error);
}

TEST(DeltaNet, CoversWithinDelta) {
  Rng rng(11, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const MarkedTree t = oracle::random_tree(rng, 20);
    for (double delta : {0.05, 0.2, 0.7}) {
      const auto net = make_delta_net(t, delta);
      EXPECT_LE(net.radius, delta + 1e-12);
      EXPECT_NEAR(net.radius, covering_radius(t, net.points), 1e-15);
      // Spot check density from random points.
      const TreeMetric m(t);
      for (int k = 0; k < 20; ++k) {
        const auto p = random_point(rng, t);
        double d = std::numeric_limits<double>::infinity();
        for (const auto& q : net.points) d = std::min(d, m.distance(p, q));
        EXPECT_LE(d, net.radius + 1e-12);
      }
    }
  }
  EXPECT_THROW(make_delta_net(MarkedTree{}, 0.0), Error);
}

TEST(GhUpper, Examples) {
  Rng rng(12, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const MarkedTree t = oracle::random_tree(rng, 30);
    EXPECT_LE(gh_upper(t, t, 0.05), 0.05 + 1e-12);
    const double cut = rng.uniform() * t.height();
    EXPECT_LE(gh_upper(t, restrict(t, cut), 0.05), t.height() - cut + 0.05 + 1e-12);
  }
  EXPECT_LE(gh_upper(MarkedTree::segment(1.0), MarkedTree::segment(2.0), 0.01), 0.51 + 1e-12);
  EXPECT_GE(gh_upper(MarkedTree::segment(1.0), MarkedTree::segment(2.0), 0.01), 0.5 - 1e-12);
  EXPECT_THROW(gh_upper(MarkedTree{}, MarkedTree{}, -1.0), Error);
}

TEST(GhUpper, SymmetricAndTriangle) {
  Rng rng(13, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const MarkedTree a = oracle::random_tree(rng, 15), b = oracle::random_tree(rng, 15), c = oracle::random_tree(rng, 15);
    const double delta = 0.1;
    const double ab = gh_upper(a, b, delta), ba = gh_upper(b, a, delta);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(gh_upper(a, c, delta), ab + gh_upper(b, c, delta) + 2 * delta + 1e-12);
    EXPECT_GE(ab + 1e-12, gh_lower_invariants(a, b));
  }
}

TEST(GhBracket, Examples) {
  const MarkedTree tiny = MarkedTree::segment(0.1);
  const auto net = make_net(tiny, {{0, 0.0}, {0, 0.1}});
  const auto same = gh_bracket_small(tiny, net, tiny, net);
  EXPECT_EQ(same.lower, 0.0);
  EXPECT_NEAR(same.upper, 0.1, 1e-15);

  const MarkedTree s1 = MarkedTree::segment(1.0), s2 = MarkedTree::segment(2.0);
  const auto n1 = make_net(s1, {{0, 0.0}, {0, 0.5}, {0, 1.0}});
  const auto n2 = make_net(s2, {{0, 0.0}, {0, 1.0}, {0, 2.0}});
  const auto seg = gh_bracket_small(s1, n1, s2, n2);
  EXPECT_LE(seg.lower, 0.5);
  EXPECT_GE(seg.upper, 0.5);
  const auto seg_d = gh_bracket_small(s1, s2, 0.5);
  EXPECT_LE(seg_d.lower, 0.5);
  EXPECT_GE(seg_d.upper, 0.5);

  const auto pt = gh_bracket_small(MarkedTree{}, MarkedTree::segment(2.0), 0.5);
  EXPECT_LE(pt.lower, 1.0);
  EXPECT_GE(pt.upper, 1.0);

  EXPECT_THROW(gh_bracket_small(s1, s2, 0.05), Error);
  try {
    gh_bracket_small(s1, s2, 0.05);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::instance_too_large);
  }
}

TEST(GhBracket, NetDistanceMatchesBruteForce) {
  Rng rng(14, 0);
  for (int rep = 0; rep < 60; ++rep) {
    const MarkedTree a = small_tree(rng), b = small_tree(rng);
    auto pick = [&](const MarkedTree& t) {
      std::vector<TreePoint> pts{{0, 0.0}};
      const std::size_t k = 1 + rng.below(3);
      for (std::size_t i = 0; i < k; ++i) {
        auto p = random_point(rng, t);
        if (level(t, p) > 0.0) pts.push_back(p);
      }
      return pts;
    };
    const auto pa = pick(a), pb = pick(b);
    const auto br = gh_bracket_small(a, make_net(a, pa), b, make_net(b, pb));
    EXPECT_NEAR(br.net_distance, brute_net_distance(a, pa, b, pb), 1e-12);
  }
}

TEST(GhBracket, Properties) {
  Rng rng(15, 0);
  int tested = 0;
  for (int rep = 0; rep < 200 && tested < 60; ++rep) {
    const MarkedTree a = small_tree(rng), b = small_tree(rng);
    const double delta = 0.6;
    GhBracket ab, ba;
    try {
      ab = gh_bracket_small(a, b, delta);
      ba = gh_bracket_small(b, a, delta);
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::instance_too_large);
      continue;
    }
    ++tested;
    EXPECT_NEAR(ab.lower, ba.lower, 1e-12);
    EXPECT_NEAR(ab.upper, ba.upper, 1e-12);
    EXPECT_LE(ab.lower, ab.upper);
    EXPECT_LE(gh_lower_invariants(a, b), ab.upper + 1e-12);
    EXPECT_LE(ab.lower, gh_upper(a, b, 0.05) + 1e-12);
    if (metric_canonical_key(a) == metric_canonical_key(b)) EXPECT_EQ(ab.lower, 0.0);
    // An isometric copy has lower bound 0.
    EXPECT_EQ(gh_bracket_small(a, normalize(a), delta).lower, 0.0);
  }
  EXPECT_GE(tested, 30);
}

TEST(GhLower, Examples) {
  EXPECT_GE(gh_lower_invariants(MarkedTree::segment(1.0), MarkedTree::segment(2.0)), 0.5);
  Rng rng(16, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const MarkedTree t = oracle::random_tree(rng, 30);
    EXPECT_EQ(gh_lower_invariants(t, t), 0.0);
    const MarkedTree u = oracle::random_tree(rng, 30);
    EXPECT_LE(gh_lower_invariants(t, u), gh_upper(t, u, 0.05) + 1e-12);
  }
  // Equal heights, different branching: the profile bound is positive.
  const MarkedTree star(OrderedTree({3, 0, 0, 0}), {0.0, 1.0, 1.0, 1.0});
  EXPECT_GT(gh_lower_invariants(star, MarkedTree::segment(1.0)), 0.0);
}
