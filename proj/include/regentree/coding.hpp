#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "regentree/mtt.hpp"
#include "regentree/tree.hpp"

namespace regentree {

struct Breakpoint {
  double s = 0.0;
  double g = 0.0;
};

/// Piecewise-linear nonnegative function on [0, zeta], zero at both ends.
class Excursion {
 public:
  explicit Excursion(std::vector<Breakpoint> pts) : pts_(std::move(pts)) {
    require(pts_.size() >= 2, "an excursion needs at least two breakpoints");
    require(pts_.front().s == 0.0, "an excursion starts at s = 0");
    require(pts_.front().g == 0.0 && pts_.back().g == 0.0, "an excursion vanishes at both ends");
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      require(std::isfinite(pts_[i].s) && std::isfinite(pts_[i].g), "breakpoints must be finite");
      require(pts_[i].g >= 0.0, "an excursion is nonnegative");
      if (i > 0) require(pts_[i].s > pts_[i - 1].s, "breakpoint times must be strictly increasing");
    }
  }

  const std::vector<Breakpoint>& breakpoints() const { return pts_; }
  std::size_t size() const { return pts_.size(); }
  double zeta() const { return pts_.back().s; }

  double max_value() const {
    double m = 0.0;
    for (const auto& p : pts_) m = std::max(m, p.g);
    return m;
  }

  /// Index i with s_i <= s < s_{i+1}; the last segment also owns zeta.
  std::size_t segment(double s) const {
    require(s >= 0.0 && s <= zeta(), "time outside [0, zeta]");
    auto it = std::upper_bound(pts_.begin(), pts_.end(), s, [](double v, const Breakpoint& b) { return v < b.s; });
    const auto i = static_cast<std::size_t>(it - pts_.begin());
    return std::min(i == 0 ? 0 : i - 1, pts_.size() - 2);
  }

  double operator()(double s) const {
    const std::size_t i = segment(s);
    const auto& a = pts_[i];
    const auto& b = pts_[i + 1];
    if (s == a.s) return a.g;
    if (s == b.s) return b.g;
    const double w = (s - a.s) / (b.s - a.s);
    return a.g + w * (b.g - a.g);
  }

 private:
  std::vector<Breakpoint> pts_;
};

/// g(s) + g(t) - 2 min of g over [s ^ t, s v t].
inline double pseudo_distance(const Excursion& g, double s, double t) {
  if (s > t) std::swap(s, t);
  const double gs = g(s), gt = g(t);
  double m = std::min(gs, gt);
  const auto& pts = g.breakpoints();
  for (std::size_t i = g.segment(s) + 1; i < pts.size() && pts[i].s < t; ++i) m = std::min(m, pts[i].g);
  return gs + gt - 2.0 * m;
}

/// The tree coded by g, plus the vertex that each breakpoint maps to.
struct CodedTree {
  MarkedTree tree;
  std::vector<Index> vertex;

  /// Image of time s in the quotient tree.
  TreePoint point_at(const Excursion& g, double s) const {
    const std::size_t i = g.segment(s);
    const auto& pts = g.breakpoints();
    const Index v = pts[i].g >= pts[i + 1].g ? vertex[i] : vertex[i + 1];
    return ancestor_at_level(tree, v, std::min(g(s), tree.top(v)));
  }
};

inline CodedTree code_excursion(const Excursion& g) {
  const auto& pts = g.breakpoints();
  require(pts.size() >= 3, "an excursion needs an interior breakpoint");

  // Nodes are kept in a local arena so edges can be split in place.
  std::vector<Index> parent{npos};
  std::vector<double> top{0.0};
  std::vector<std::vector<Index>> kids(1);
  auto add = [&](Index p, double y) {
    parent.push_back(p);
    top.push_back(y);
    kids.emplace_back();
    kids[p].push_back(parent.size() - 1);
    return parent.size() - 1;
  };

  std::vector<Index> path{0};
  std::vector<Index> vertex_id(pts.size(), 0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double y = pts[i].g;
    const double cur = top[path.back()];
    if (y > cur) {
      path.push_back(add(path.back(), y));
    } else if (y < cur) {
      while (path.size() >= 2 && top[path[path.size() - 2]] >= y) path.pop_back();
      const Index x = path.back();
      if (top[x] > y) {
        // Split the edge of x at level y.
        const Index p = parent[x];
        const Index m = parent.size();
        parent.push_back(p);
        top.push_back(y);
        kids.push_back({x});
        std::replace(kids[p].begin(), kids[p].end(), x, m);
        parent[x] = m;
        path.back() = m;
      }
    }
    vertex_id[i] = path.back();
  }

  TreeBuilder b;
  std::vector<Index> stack{0};
  std::vector<Index> built(parent.size(), npos);
  built[0] = b.add_root(0.0);
  // Arena ids are not in preorder; walk from the root.
  std::vector<Index> order;
  while (!stack.empty()) {
    const Index x = stack.back();
    stack.pop_back();
    order.push_back(x);
    for (auto it = kids[x].rbegin(); it != kids[x].rend(); ++it) stack.push_back(*it);
  }
  for (Index x : order) {
    if (x == 0) continue;
    built[x] = b.add_child(built[parent[x]], top[x] - top[parent[x]]);
  }
  // Builder ids follow arena preorder, so they are final preorder indices.
  MarkedTree t = b.build_marked();
  std::vector<Index> vertex(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) vertex[i] = built[vertex_id[i]];

  if (t.shape().child_count(0) == 1) {
    // Fold the single edge above the root into the root edge.
    const auto& c = t.shape().child_counts();
    std::vector<double> lens(t.lengths().begin() + 1, t.lengths().end());
    t = MarkedTree(OrderedTree(std::vector<std::uint32_t>(c.begin() + 1, c.end())), std::move(lens));
    for (auto& v : vertex) v = v == 0 ? 0 : v - 1;
  }
  return {std::move(t), std::move(vertex)};
}

inline MarkedTree tree_from_excursion(const Excursion& g) { return code_excursion(g).tree; }

/// Depth-first contour visiting children in stored order; unit speed.
inline Excursion contour_of(const MarkedTree& tree) {
  require(tree.total_length() > 0.0, "a tree of zero length has no contour");
  const auto& s = tree.shape();
  std::vector<Breakpoint> pts{{0.0, 0.0}};
  double time = 0.0;
  auto step = [&](double dt, double y) {
    if (dt <= 0.0) return;
    time += dt;
    pts.push_back({time, y});
  };
  step(tree.length(0), tree.top(0));
  std::vector<std::pair<Index, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto& [x, next] = stack.back();
    if (next < s.child_count(x)) {
      const Index c = s.children(x)[next++];
      step(tree.length(c), tree.top(c));
      stack.emplace_back(c, 0);
    } else {
      const Index node = x;
      stack.pop_back();
      step(tree.length(node), tree.base(node));
    }
  }
  pts.back().g = 0.0;
  return Excursion(std::move(pts));
}

/// CSV `s,g` lines; a non-numeric first line is taken as a header.
inline Excursion read_excursion(std::istream& in) {
  std::vector<Breakpoint> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Breakpoint b;
    char comma = 0;
    if (!(ls >> b.s >> comma >> b.g) || comma != ',') {
      if (lineno == 1) continue;
      throw Error(ErrorKind::parse_error, "line " + std::to_string(lineno) + ": expected s,g");
    }
    pts.push_back(b);
  }
  return Excursion(std::move(pts));
}

inline Excursion read_excursion_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path);
  return read_excursion(in);
}

inline void write_excursion(std::ostream& out, const Excursion& g) {
  out << "s,g\n";
  for (const auto& b : g.breakpoints()) out << format_length(b.s) << ',' << format_length(b.g) << '\n';
}

}  // namespace regentree
