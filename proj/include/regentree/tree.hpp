#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "regentree/error.hpp"

namespace regentree {

using Index = std::size_t;
inline constexpr Index npos = std::numeric_limits<Index>::max();

/// Ulam-Harris word. Digits are 1-based child indices.
struct LabelPath {
  std::vector<std::uint32_t> digits;

  std::size_t generation() const { return digits.size(); }
  bool is_root() const { return digits.empty(); }

  LabelPath parent() const {
    require(!digits.empty(), "the root label has no parent");
    LabelPath p{digits};
    p.digits.pop_back();
    return p;
  }

  LabelPath child(std::uint32_t j) const {
    require(j >= 1, "child index must be positive");
    LabelPath c{digits};
    c.digits.push_back(j);
    return c;
  }

  /// "" for the root, otherwise digits joined by '.'.
  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < digits.size(); ++i) {
      if (i) s += '.';
      s += std::to_string(digits[i]);
    }
    return s;
  }

  // Lexicographic order on words is preorder.
  friend auto operator<=>(const LabelPath&, const LabelPath&) = default;
  friend bool operator==(const LabelPath&, const LabelPath&) = default;
};

/// Rooted ordered tree stored as its preorder child-count sequence.
/// Node 0 is the root; the subtree of node i is the index range
/// [i, i + subtree_size(i)).
class OrderedTree {
 public:
  OrderedTree() : OrderedTree(std::vector<std::uint32_t>{0}) {}

  explicit OrderedTree(std::vector<std::uint32_t> counts) : counts_(std::move(counts)) {
    require(!counts_.empty(), "a tree has at least one node");
    const std::size_t n = counts_.size();
    parent_.assign(n, npos);
    depth_.assign(n, 0);
    size_.assign(n, 1);
    child_begin_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) child_begin_[i + 1] = child_begin_[i] + counts_[i];
    require(child_begin_[n] == n - 1, "child counts do not describe a single tree");
    child_list_.assign(n - 1, 0);

    // Each stack entry is a node still waiting for children.
    std::vector<std::pair<Index, std::uint32_t>> open;
    for (Index i = 0; i < n; ++i) {
      if (i > 0) {
        require(!open.empty(), "child counts do not describe a single tree");
        auto& top = open.back();
        parent_[i] = top.first;
        depth_[i] = depth_[top.first] + 1;
        child_list_[child_begin_[top.first] + (counts_[top.first] - top.second)] = i;
        if (--top.second == 0) open.pop_back();
      }
      if (counts_[i] > 0) open.emplace_back(i, counts_[i]);
    }
    require(open.empty(), "child counts do not describe a single tree");
    for (Index i = n; i-- > 1;) size_[parent_[i]] += size_[i];
  }

  /// Builds from a parent-closed label set without gaps in child indices.
  static OrderedTree from_labels(std::vector<LabelPath> labels) {
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    require(!labels.empty() && labels.front().is_root(), "label set must contain the root");
    std::map<LabelPath, Index> pos;
    std::vector<std::uint32_t> counts(labels.size(), 0);
    for (Index i = 0; i < labels.size(); ++i) {
      const auto& u = labels[i];
      if (i > 0) {
        auto it = pos.find(u.parent());
        require(it != pos.end(), "label set not closed under parent: " + u.to_string());
        require(u.digits.back() == counts[it->second] + 1, "gap in child indices at " + u.to_string());
        ++counts[it->second];
      }
      pos.emplace(u, i);
    }
    return OrderedTree(std::move(counts));
  }

  std::size_t size() const { return counts_.size(); }
  std::uint32_t child_count(Index i) const { return counts_[i]; }
  const std::vector<std::uint32_t>& child_counts() const { return counts_; }
  std::span<const Index> children(Index i) const {
    return {child_list_.data() + child_begin_[i], counts_[i]};
  }
  Index parent(Index i) const { return parent_[i]; }
  std::size_t depth(Index i) const { return depth_[i]; }
  std::size_t subtree_size(Index i) const { return size_[i]; }

  /// Generations in the tree, max |u|.
  std::size_t max_depth() const { return *std::max_element(depth_.begin(), depth_.end()); }

  LabelPath label(Index i) const {
    LabelPath u;
    u.digits.resize(depth_[i]);
    for (Index x = i; parent_[x] != npos; x = parent_[x]) {
      const auto sib = children(parent_[x]);
      u.digits[depth_[x] - 1] = static_cast<std::uint32_t>(std::find(sib.begin(), sib.end(), x) - sib.begin() + 1);
    }
    return u;
  }

  std::optional<Index> find(const LabelPath& u) const {
    Index x = 0;
    for (auto d : u.digits) {
      if (d == 0 || d > counts_[x]) return std::nullopt;
      x = children(x)[d - 1];
    }
    return x;
  }

  friend bool operator==(const OrderedTree& a, const OrderedTree& b) { return a.counts_ == b.counts_; }

 private:
  std::vector<std::uint32_t> counts_;
  std::vector<Index> parent_;
  std::vector<std::size_t> depth_;
  std::vector<std::size_t> size_;
  std::vector<std::size_t> child_begin_;
  std::vector<Index> child_list_;
};

/// Ordered tree with a nonnegative length per node. The edge of node u runs
/// from its parent's top at level base(u) to top(u) = base(u) + h_u; the
/// root edge starts at the root point, level 0.
class MarkedTree {
 public:
  MarkedTree() : MarkedTree(OrderedTree{}, {0.0}) {}

  MarkedTree(OrderedTree shape, std::vector<double> lengths) : shape_(std::move(shape)), len_(std::move(lengths)) {
    require(len_.size() == shape_.size(), "one length per node is required");
    for (double h : len_) require(std::isfinite(h) && h >= 0.0, "lengths must be finite and nonnegative");
    const std::size_t n = len_.size();
    base_.assign(n, 0.0);
    for (Index i = 1; i < n; ++i) {
      const Index p = shape_.parent(i);
      base_[i] = base_[p] + len_[p];
    }
    subtop_.resize(n);
    for (Index i = 0; i < n; ++i) subtop_[i] = base_[i] + len_[i];
    for (Index i = n; i-- > 1;) {
      const Index p = shape_.parent(i);
      subtop_[p] = std::max(subtop_[p], subtop_[i]);
    }
  }

  static MarkedTree segment(double length) { return MarkedTree(OrderedTree{}, {length}); }

  const OrderedTree& shape() const { return shape_; }
  std::size_t size() const { return len_.size(); }
  double length(Index i) const { return len_[i]; }
  const std::vector<double>& lengths() const { return len_; }
  double base(Index i) const { return base_[i]; }
  double top(Index i) const { return base_[i] + len_[i]; }
  /// Highest level reached in the subtree of i.
  double subtree_top(Index i) const { return subtop_[i]; }
  double height() const { return subtop_[0]; }

  double total_length() const {
    double s = 0.0;
    for (double h : len_) s += h;
    return s;
  }

  friend bool operator==(const MarkedTree& a, const MarkedTree& b) {
    return a.shape_ == b.shape_ && a.len_ == b.len_;
  }

 private:
  OrderedTree shape_;
  std::vector<double> len_;
  std::vector<double> base_;
  std::vector<double> subtop_;
};

/// A point on the edge of `node`, `offset` above the edge's lower end.
struct TreePoint {
  Index node = 0;
  double offset = 0.0;
  friend bool operator==(const TreePoint&, const TreePoint&) = default;
};

inline double level(const MarkedTree& t, const TreePoint& p) { return t.base(p.node) + p.offset; }

/// The point at level y on the path from the root to the top of `node`.
inline TreePoint ancestor_at_level(const MarkedTree& t, Index node, double y) {
  require(y >= 0.0 && y <= t.top(node), "level outside the ancestral path");
  Index x = node;
  while (x != 0 && t.base(x) > y) x = t.shape().parent(x);
  return {x, std::clamp(y - t.base(x), 0.0, t.length(x))};
}

/// Incremental construction with arbitrary insertion order; build() relabels
/// nodes in preorder (children kept in insertion order).
class TreeBuilder {
 public:
  Index add_root(double length = 0.0) {
    require(parent_.empty(), "root already added");
    parent_.push_back(npos);
    len_.push_back(length);
    kids_.emplace_back();
    return 0;
  }

  Index add_child(Index parent, double length) {
    require(parent < parent_.size(), "unknown parent");
    const Index id = parent_.size();
    parent_.push_back(parent);
    len_.push_back(length);
    kids_.emplace_back();
    kids_[parent].push_back(id);
    return id;
  }

  std::size_t size() const { return parent_.size(); }
  double& length(Index id) { return len_[id]; }
  std::size_t child_count(Index id) const { return kids_[id].size(); }
  Index parent(Index id) const { return parent_[id]; }

  /// Builder ids in preorder.
  std::vector<Index> preorder() const {
    std::vector<Index> order;
    order.reserve(parent_.size());
    std::vector<Index> stack{0};
    while (!stack.empty()) {
      const Index x = stack.back();
      stack.pop_back();
      order.push_back(x);
      for (auto it = kids_[x].rbegin(); it != kids_[x].rend(); ++it) stack.push_back(*it);
    }
    return order;
  }

  MarkedTree build_marked() const {
    require(!parent_.empty(), "empty builder");
    const auto order = preorder();
    std::vector<std::uint32_t> counts(order.size());
    std::vector<double> lens(order.size());
    for (Index i = 0; i < order.size(); ++i) {
      counts[i] = static_cast<std::uint32_t>(kids_[order[i]].size());
      lens[i] = len_[order[i]];
    }
    return MarkedTree(OrderedTree(std::move(counts)), std::move(lens));
  }

  OrderedTree build() const { return build_marked().shape(); }

 private:
  std::vector<Index> parent_;
  std::vector<double> len_;
  std::vector<std::vector<Index>> kids_;
};

namespace detail {

// Tree induced by a parent-closed set of nodes listed in preorder, whose
// first entry is an ancestor of all others.
inline MarkedTree induced(const MarkedTree& t, const std::vector<Index>& nodes, const std::vector<double>& lens) {
  std::vector<Index> remap(t.size(), npos);
  std::vector<std::uint32_t> counts(nodes.size(), 0);
  for (Index i = 0; i < nodes.size(); ++i) {
    remap[nodes[i]] = i;
    if (i > 0) ++counts[remap[t.shape().parent(nodes[i])]];
  }
  return MarkedTree(OrderedTree(std::move(counts)), lens);
}

}  // namespace detail

inline double height(const MarkedTree& t) { return t.height(); }

/// Points at level <= t; edges crossing t are cut at t.
inline MarkedTree restrict(const MarkedTree& tree, double t) {
  require(t >= 0.0, "restrict level must be nonnegative");
  if (t >= tree.height()) return tree;
  std::vector<Index> keep;
  std::vector<double> lens;
  for (Index i = 0; i < tree.size(); ++i) {
    if (i == 0 || tree.base(i) < t) {
      keep.push_back(i);
      lens.push_back(std::min(tree.length(i), t - tree.base(i)));
    }
  }
  return detail::induced(tree, keep, lens);
}

/// Nodes whose edge carries a subtree above t: base(u) <= t < top(u).
inline std::vector<Index> crossing_nodes(const MarkedTree& tree, double t) {
  std::vector<Index> out;
  for (Index i = 0; i < tree.size(); ++i) {
    if (tree.base(i) <= t && t < tree.top(i)) out.push_back(i);
  }
  return out;
}

/// Subtree of `tree` above level t that starts on the edge of `node`;
/// requires base(node) <= t < top(node).
inline MarkedTree subtree_above_at(const MarkedTree& tree, Index node, double t) {
  const std::size_t sz = tree.shape().subtree_size(node);
  std::vector<Index> nodes(sz);
  std::vector<double> lens(sz);
  for (std::size_t k = 0; k < sz; ++k) {
    nodes[k] = node + k;
    lens[k] = tree.length(node + k);
  }
  lens[0] = tree.top(node) - t;
  return detail::induced(tree, nodes, lens);
}

/// Closures of the connected components of the part strictly above level t,
/// each rooted at its level-t ancestor, in preorder of the crossing edge.
inline std::vector<MarkedTree> subtrees_above(const MarkedTree& tree, double t) {
  require(t >= 0.0, "slicing level must be nonnegative");
  std::vector<MarkedTree> out;
  for (Index u : crossing_nodes(tree, t)) out.push_back(subtree_above_at(tree, u, t));
  return out;
}

/// Number of subtrees above t with height > h.
inline std::size_t count_Z(const MarkedTree& tree, double t, double h) {
  require(t >= 0.0, "slicing level must be nonnegative");
  require(h > 0.0, "count_Z needs h > 0");
  std::size_t c = 0;
  for (Index i = 0; i < tree.size(); ++i) {
    if (tree.base(i) <= t && t < tree.top(i) && tree.subtree_top(i) - t > h) ++c;
  }
  return c;
}

/// Cardinality of {points at level t}.
inline std::size_t count_at_level(const MarkedTree& tree, double t) {
  require(t >= 0.0, "level must be nonnegative");
  if (t == 0.0) return 1;
  std::size_t c = 0;
  // Edge u holds the points with level in (base(u), top(u)].
  for (Index i = 0; i < tree.size(); ++i) {
    if (tree.base(i) < t && t <= tree.top(i)) ++c;
  }
  return c;
}

inline OrderedTree shift(const OrderedTree& theta, const LabelPath& u) {
  const auto x = theta.find(u);
  require(x.has_value(), "label not in tree: " + u.to_string());
  const auto& c = theta.child_counts();
  return OrderedTree(std::vector<std::uint32_t>(c.begin() + static_cast<std::ptrdiff_t>(*x),
                                                c.begin() + static_cast<std::ptrdiff_t>(*x + theta.subtree_size(*x))));
}

/// Class of an ordered tree under permutation of children, stored as the
/// representative whose children are sorted by shape.
class CanonicalTree {
 public:
  CanonicalTree() = default;

  const OrderedTree& rep() const { return rep_; }
  std::size_t size() const { return rep_.size(); }
  /// Shape rank of each node of rep(); equal ranks mean isomorphic subtrees.
  const std::vector<std::uint32_t>& ranks() const { return rank_; }

  friend bool operator==(const CanonicalTree& a, const CanonicalTree& b) { return a.rep_ == b.rep_; }
  friend bool operator<(const CanonicalTree& a, const CanonicalTree& b) {
    return a.rep_.child_counts() < b.rep_.child_counts();
  }

 private:
  friend CanonicalTree canonicalize(const OrderedTree&);
  OrderedTree rep_;
  std::vector<std::uint32_t> rank_;
};

namespace detail {

// Structural ranks: shapes are ordered by height, then by the sorted list of
// child ranks. The order does not depend on which tree the shapes come from,
// so sorting children by rank gives a canonical form.
inline std::vector<std::uint32_t> shape_ranks(const OrderedTree& t) {
  const std::size_t n = t.size();
  std::vector<std::uint32_t> ht(n, 0);
  for (Index i = n; i-- > 1;) ht[t.parent(i)] = std::max(ht[t.parent(i)], ht[i] + 1);
  const std::uint32_t hmax = ht[0];
  std::vector<std::vector<Index>> by_height(hmax + 1);
  for (Index i = 0; i < n; ++i) by_height[ht[i]].push_back(i);

  std::vector<std::uint32_t> rank(n, 0);
  std::vector<std::vector<std::uint32_t>> key(n);
  std::uint32_t next = 0;
  for (std::uint32_t h = 0; h <= hmax; ++h) {
    auto& level_nodes = by_height[h];
    for (Index x : level_nodes) {
      auto& k = key[x];
      for (Index c : t.children(x)) k.push_back(rank[c]);
      std::sort(k.begin(), k.end());
    }
    std::sort(level_nodes.begin(), level_nodes.end(), [&](Index a, Index b) { return key[a] < key[b]; });
    for (std::size_t j = 0; j < level_nodes.size(); ++j) {
      if (j > 0 && key[level_nodes[j]] != key[level_nodes[j - 1]]) ++next;
      rank[level_nodes[j]] = next;
    }
    ++next;
    for (Index x : level_nodes) std::vector<std::uint32_t>().swap(key[x]);
  }
  return rank;
}

}  // namespace detail

inline CanonicalTree canonicalize(const OrderedTree& theta) {
  const auto rank = detail::shape_ranks(theta);
  // Emit preorder with children sorted by rank (stable for equal ranks).
  std::vector<std::uint32_t> counts;
  std::vector<std::uint32_t> new_rank;
  counts.reserve(theta.size());
  new_rank.reserve(theta.size());
  std::vector<Index> stack{0};
  std::vector<Index> kids;
  while (!stack.empty()) {
    const Index x = stack.back();
    stack.pop_back();
    counts.push_back(theta.child_count(x));
    new_rank.push_back(rank[x]);
    auto c = theta.children(x);
    kids.assign(c.begin(), c.end());
    std::stable_sort(kids.begin(), kids.end(), [&](Index a, Index b) { return rank[a] < rank[b]; });
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  CanonicalTree out;
  out.rep_ = OrderedTree(std::move(counts));
  out.rank_ = std::move(new_rank);
  return out;
}

using BigInt = boost::multiprecision::cpp_int;

/// Number of distinct ordered trees in the class: product over nodes of
/// k_u! / prod of factorials of isomorphic-child multiplicities.
inline BigInt count_orderings(const CanonicalTree& xi) {
  const auto& t = xi.rep();
  const auto& rank = xi.ranks();
  BigInt total = 1;
  for (Index x = 0; x < t.size(); ++x) {
    const auto kids = t.children(x);
    for (std::size_t j = 2; j <= kids.size(); ++j) total *= j;
    std::size_t run = 1;
    for (std::size_t j = 1; j <= kids.size(); ++j) {
      if (j < kids.size() && rank[kids[j]] == rank[kids[j - 1]]) {
        ++run;
        total /= run;
      } else {
        run = 1;
      }
    }
  }
  return total;
}

/// Isometric tree with a zero-length root edge, no zero-length non-root
/// edges and no non-root vertex of degree two. Children keep their order.
inline MarkedTree normalize(const MarkedTree& tree) {
  TreeBuilder b;
  b.add_root(0.0);
  std::vector<Index> vertex(tree.size());
  vertex[0] = tree.length(0) > 0.0 ? b.add_child(0, tree.length(0)) : 0;
  for (Index i = 1; i < tree.size(); ++i) {
    const Index p = vertex[tree.shape().parent(i)];
    vertex[i] = tree.length(i) > 0.0 ? b.add_child(p, tree.length(i)) : p;
  }
  const MarkedTree raw = b.build_marked();

  TreeBuilder s;
  s.add_root(0.0);
  std::vector<Index> fin(raw.size());
  fin[0] = 0;
  for (Index i = 1; i < raw.size(); ++i) {
    const Index p = raw.shape().parent(i);
    if (p != 0 && raw.shape().child_count(p) == 1) {
      fin[i] = fin[p];
      s.length(fin[p]) += raw.length(i);
    } else {
      fin[i] = s.add_child(fin[p], raw.length(i));
    }
  }
  return s.build_marked();
}

inline constexpr double kLengthTolerance = 1e-9;

/// Key equal for root-preserving isometric trees, lengths quantized at
/// kLengthTolerance.
inline std::string metric_canonical_key(const MarkedTree& tree) {
  const MarkedTree t = normalize(tree);
  std::vector<std::string> key(t.size());
  std::vector<std::string> parts;
  for (Index x = t.size(); x-- > 0;) {
    parts.clear();
    for (Index c : t.shape().children(x)) {
      parts.push_back(std::move(key[c]) + ":" + std::to_string(std::llround(t.length(c) / kLengthTolerance)));
    }
    std::sort(parts.begin(), parts.end());
    std::string k = "(";
    for (std::size_t j = 0; j < parts.size(); ++j) {
      if (j) k += ',';
      k += parts[j];
    }
    k += ')';
    key[x] = std::move(k);
  }
  return key[0];
}

}  // namespace regentree
