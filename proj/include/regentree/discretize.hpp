#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "regentree/distance.hpp"
#include "regentree/gh_metric.hpp"
#include "regentree/rng.hpp"
#include "regentree/tree.hpp"

namespace regentree {

struct DiscretizationResult {
  /// Representative of xi in construction order.
  OrderedTree theta;
  CanonicalTree xi;
  /// theta with a zero root edge and every other edge of length epsilon.
  MarkedTree skeleton;
  /// phi[u] for u a preorder index of theta.
  std::vector<TreePoint> phi;
  double epsilon = 0.0;
};

/// The epsilon-discretization, following the height-band induction. The
/// subtree handled at generation g starts at level g * epsilon.
inline DiscretizationResult discretize(const MarkedTree& tree, double epsilon) {
  require(epsilon > 0.0, "epsilon must be positive");
  require(tree.height() > epsilon, "tree height must exceed epsilon");
  const auto& s = tree.shape();

  struct Item {
    Index node;  // edge of the source tree carrying the subtree root
    std::size_t gen;
  };
  std::vector<std::uint32_t> counts;
  std::vector<TreePoint> phi;
  std::vector<Item> stack{{0, 0}};
  std::vector<Index> found, scan;
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const double start = epsilon * static_cast<double>(it.gen);
    phi.push_back(it.gen == 0 ? TreePoint{0, 0.0} : TreePoint{it.node, start - tree.base(it.node)});
    counts.push_back(0);
    if (tree.subtree_top(it.node) - start <= 2.0 * epsilon) continue;

    // Subtrees above start + epsilon of height > epsilon, in preorder.
    const double cut = epsilon * static_cast<double>(it.gen + 1);
    found.clear();
    scan.assign(1, it.node);
    while (!scan.empty()) {
      const Index x = scan.back();
      scan.pop_back();
      if (tree.top(x) <= cut) {
        const auto kids = s.children(x);
        for (auto k = kids.rbegin(); k != kids.rend(); ++k) scan.push_back(*k);
      } else if (tree.subtree_top(x) - cut > epsilon) {
        found.push_back(x);
      }
    }
    counts.back() = static_cast<std::uint32_t>(found.size());
    for (auto k = found.rbegin(); k != found.rend(); ++k) stack.push_back({*k, it.gen + 1});
  }

  DiscretizationResult out;
  out.epsilon = epsilon;
  out.theta = OrderedTree(std::move(counts));
  out.xi = canonicalize(out.theta);
  std::vector<double> lens(out.theta.size(), epsilon);
  lens[0] = 0.0;
  out.skeleton = MarkedTree(out.theta, std::move(lens));
  out.phi = std::move(phi);
  return out;
}

inline CanonicalTree xi_epsilon(const MarkedTree& tree, double epsilon) { return discretize(tree, epsilon).xi; }

/// Upper bound on the GH distance between the skeleton and the tree, as the
/// sum of three exact terms: covering radius of phi(theta) in the tree, half
/// the distortion of phi(u) <-> m_u, and the covering radius of the skeleton
/// vertices in the skeleton.
struct WitnessBound {
  double cover = 0.0;
  double distortion = 0.0;
  double skeleton_cover = 0.0;
  double total() const { return cover + distortion + skeleton_cover; }
};

inline WitnessBound witness_bound(const MarkedTree& tree, const DiscretizationResult& d) {
  WitnessBound b;
  b.cover = covering_radius(tree, d.phi);
  const TreeMetric metric(tree);
  const auto& th = d.theta;
  // phi(u) and phi(u') for u' below u in theta lie on one geodesic from the
  // root, so only pairs in distinct child branches of some w contribute:
  // the excess of their meeting level over epsilon |w|.
  for (Index w = 0; w < th.size(); ++w) {
    const auto kids = th.children(w);
    const double lw = d.epsilon * static_cast<double>(th.depth(w));
    for (std::size_t i = 0; i < kids.size(); ++i)
      for (std::size_t j = i + 1; j < kids.size(); ++j) {
        b.distortion = std::max(b.distortion, metric.meet_level(d.phi[kids[i]], d.phi[kids[j]]) - lw);
      }
  }
  b.skeleton_cover = th.size() > 1 ? 0.5 * d.epsilon : 0.0;
  return b;
}

inline std::pair<DiscretizationResult, double> discretisation_witness(const MarkedTree& tree, double epsilon) {
  auto d = discretize(tree, epsilon);
  const double bound = witness_bound(tree, d).total();
  return {std::move(d), bound};
}

/// The correspondence pairing each net point of the tree with its nearest
/// phi point's theta node, and phi(u) with m_u; net points of the skeleton
/// are paired with the phi image of the top of their edge. Used to cross-check
/// the witness bound directly.
inline Correspondence witness_correspondence(const MarkedTree& tree, const DiscretizationResult& d, double delta) {
  Correspondence r;
  const TreeMetric metric(tree);
  const auto net = make_delta_net(tree, delta);
  for (Index u = 0; u < d.theta.size(); ++u) {
    r.pairs.push_back({d.phi[u], TreePoint{u, d.skeleton.length(u)}});
  }
  for (const auto& p : net.points) {
    Index best = 0;
    double bd = metric.distance(p, d.phi[0]);
    for (Index u = 1; u < d.theta.size(); ++u) {
      const double du = metric.distance(p, d.phi[u]);
      if (du < bd) {
        bd = du;
        best = u;
      }
    }
    r.pairs.push_back({p, TreePoint{best, d.skeleton.length(best)}});
  }
  const auto snet = make_delta_net(d.skeleton, delta);
  for (const auto& q : snet.points) r.pairs.push_back({d.phi[q.node], q});
  return r;
}

/// Uniform element of the class by independent uniform child shuffles.
inline OrderedTree uniform_ordering(const CanonicalTree& xi, Rng& rng) {
  const auto& t = xi.rep();
  std::vector<std::uint32_t> counts;
  counts.reserve(t.size());
  std::vector<Index> stack{0};
  std::vector<Index> kids;
  while (!stack.empty()) {
    const Index x = stack.back();
    stack.pop_back();
    counts.push_back(t.child_count(x));
    const auto c = t.children(x);
    kids.assign(c.begin(), c.end());
    rng.shuffle(kids);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return OrderedTree(std::move(counts));
}

}  // namespace regentree
