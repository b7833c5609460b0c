#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "regentree/tree.hpp"

namespace regentree {

/// Distances between points of a marked tree. LCA by Euler tour and a
/// sparse table over first-visit depths.
class TreeMetric {
 public:
  explicit TreeMetric(const MarkedTree& tree) : tree_(&tree) {
    const auto& s = tree.shape();
    const std::size_t n = s.size();
    first_.assign(n, 0);
    euler_.reserve(2 * n);
    std::vector<std::pair<Index, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto& [x, next] = stack.back();
      if (next == 0) first_[x] = euler_.size();
      euler_.push_back(x);
      if (next < s.child_count(x)) {
        const Index c = s.children(x)[next++];
        stack.emplace_back(c, 0);
      } else {
        stack.pop_back();
      }
    }
    const std::size_t m = euler_.size();
    std::size_t levels = 1;
    while ((std::size_t{1} << levels) <= m) ++levels;
    table_.assign(levels, std::vector<Index>(m));
    table_[0] = euler_;
    for (std::size_t k = 1; k < levels; ++k) {
      const std::size_t span = std::size_t{1} << k;
      for (std::size_t i = 0; i + span <= m; ++i) {
        table_[k][i] = shallower(table_[k - 1][i], table_[k - 1][i + span / 2]);
      }
    }
  }

  const MarkedTree& tree() const { return *tree_; }

  Index lca(Index a, Index b) const {
    std::size_t l = first_[a], r = first_[b];
    if (l > r) std::swap(l, r);
    std::size_t k = 0;
    while ((std::size_t{2} << k) <= r - l + 1) ++k;
    return shallower(table_[k][l], table_[k][r + 1 - (std::size_t{1} << k)]);
  }

  double distance(const TreePoint& p, const TreePoint& q) const {
    const MarkedTree& t = *tree_;
    if (p.node == q.node) return std::abs(p.offset - q.offset);
    const Index w = lca(p.node, q.node);
    const double lp = level(t, p), lq = level(t, q);
    if (w == p.node || w == q.node) return std::abs(lp - lq);
    return lp + lq - 2.0 * t.top(w);
  }

  /// Level of the meeting point of the geodesics from the root.
  double meet_level(const TreePoint& p, const TreePoint& q) const {
    const double lp = level(*tree_, p), lq = level(*tree_, q);
    return 0.5 * (lp + lq - distance(p, q));
  }

 private:
  Index shallower(Index a, Index b) const {
    return tree_->shape().depth(a) <= tree_->shape().depth(b) ? a : b;
  }

  const MarkedTree* tree_;
  std::vector<std::size_t> first_;
  std::vector<Index> euler_;
  std::vector<std::vector<Index>> table_;
};

}  // namespace regentree
