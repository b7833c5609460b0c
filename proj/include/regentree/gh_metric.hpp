#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "regentree/distance.hpp"
#include "regentree/tree.hpp"

namespace regentree {

// Pointed GH distance is computed as half the infimal distortion over
// correspondences that contain the root pair.

struct Correspondence {
  std::vector<std::pair<TreePoint, TreePoint>> pairs;
};

/// Finite point set with its exact covering radius. `delta` is the
/// requested spacing; radius <= delta / 2 for make_delta_net.
struct DeltaNet {
  std::vector<TreePoint> points;
  double delta = 0.0;
  double radius = 0.0;
};

/// Root, every node top, and subdivision points at spacing <= delta.
inline DeltaNet make_delta_net(const MarkedTree& tree, double delta) {
  require(delta > 0.0, "net spacing must be positive");
  DeltaNet net;
  net.delta = delta;
  net.points.push_back({0, 0.0});
  for (Index u = 0; u < tree.size(); ++u) {
    const double len = tree.length(u);
    if (len <= 0.0) continue;
    const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(len / delta)));
    for (std::size_t j = 1; j < pieces; ++j) net.points.push_back({u, len * static_cast<double>(j) / static_cast<double>(pieces)});
    net.points.push_back({u, len});
    net.radius = std::max(net.radius, 0.5 * len / static_cast<double>(pieces));
  }
  return net;
}

/// sup over the tree of the distance to the nearest listed point.
inline double covering_radius(const MarkedTree& tree, const std::vector<TreePoint>& points) {
  require(!points.empty(), "covering radius of an empty set");
  const std::size_t n = tree.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Vertex 0 is the root point, vertex u + 1 the top of node u.
  auto base_vertex = [&](Index u) { return u == 0 ? Index{0} : tree.shape().parent(u) + 1; };
  std::vector<double> d(n + 1, inf);
  std::vector<std::vector<double>> on_edge(n);
  for (const auto& p : points) {
    require(p.node < n && p.offset >= 0.0 && p.offset <= tree.length(p.node), "point outside the tree");
    on_edge[p.node].push_back(p.offset);
    d[base_vertex(p.node)] = std::min(d[base_vertex(p.node)], p.offset);
    d[p.node + 1] = std::min(d[p.node + 1], tree.length(p.node) - p.offset);
  }
  for (Index u = n; u-- > 0;) {
    auto& db = d[base_vertex(u)];
    db = std::min(db, d[u + 1] + tree.length(u));
  }
  for (Index u = 0; u < n; ++u) d[u + 1] = std::min(d[u + 1], d[base_vertex(u)] + tree.length(u));

  double radius = 0.0;
  for (Index u = 0; u < n; ++u) {
    const double len = tree.length(u);
    auto& src = on_edge[u];
    src.push_back(-d[base_vertex(u)]);
    src.push_back(len + d[u + 1]);
    std::sort(src.begin(), src.end());
    for (std::size_t j = 0; j + 1 < src.size(); ++j) {
      const double p = src[j], q = src[j + 1];
      const double lo = std::max(p, 0.0), hi = std::min(q, len);
      if (lo > hi) continue;
      const double x = std::clamp(0.5 * (p + q), lo, hi);
      radius = std::max(radius, std::min(x - p, q - x));
    }
  }
  return radius;
}

inline DeltaNet make_net(const MarkedTree& tree, std::vector<TreePoint> points) {
  DeltaNet net;
  net.radius = covering_radius(tree, points);
  net.delta = 2.0 * net.radius;
  net.points = std::move(points);
  return net;
}

namespace detail {

inline double max_pair_distortion(const std::vector<std::pair<TreePoint, TreePoint>>& pairs, const TreeMetric& ma,
                                  const TreeMetric& mb) {
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const double da = ma.distance(pairs[i].first, pairs[j].first);
      const double db = mb.distance(pairs[i].second, pairs[j].second);
      worst = std::max(worst, std::abs(da - db));
    }
  }
  return worst;
}

}  // namespace detail

/// Half the largest distance distortion among pairs of R.
inline double half_distortion(const Correspondence& r, const MarkedTree& a, const MarkedTree& b) {
  const bool has_root = std::any_of(r.pairs.begin(), r.pairs.end(), [&](const auto& pq) {
    return level(a, pq.first) == 0.0 && level(b, pq.second) == 0.0;
  });
  require(has_root, "correspondence must contain the root pair");
  const TreeMetric ma(a), mb(b);
  return 0.5 * detail::max_pair_distortion(r.pairs, ma, mb);
}

namespace detail {

// Level-preserving matching of two normalized trees. Matched branches are
// paired by a bottleneck search over children at every pair of points where
// either side branches; unmatched branches collapse onto the partner point.
class LevelMatcher {
 public:
  LevelMatcher(const MarkedTree& a, const MarkedTree& b) : a_(a), b_(b) {}

  struct Entry {
    Index node;
    double offset;
  };

  struct Segment {
    double lo, hi;
    Index other;
    double other_lo;
  };

  struct Side {
    std::vector<std::vector<Segment>> segs;
    std::vector<TreePoint> target;
    std::vector<bool> collapsed;
    std::vector<double> collapse_from;
  };

  void run() {
    side_a_ = make_side(a_);
    side_b_ = make_side(b_);
    std::vector<Entry> la = children_at(a_, {0, a_.length(0)});
    std::vector<Entry> lb = children_at(b_, {0, b_.length(0)});
    const auto pairing = bottleneck(la, lb).second;
    emit(la, lb, pairing, {0, a_.length(0)}, {0, b_.length(0)});
    while (!work_.empty()) {
      auto [ea, eb] = work_.back();
      work_.pop_back();
      walk(ea, eb);
    }
  }

  TreePoint map_a(const TreePoint& p) const { return map(side_a_, p); }
  TreePoint map_b(const TreePoint& p) const { return map(side_b_, p); }

 private:
  struct Key {
    Index ua;
    double oa;
    Index ub;
    double ob;
    bool operator==(const Key& o) const {
      return ua == o.ua && ub == o.ub && std::memcmp(&oa, &o.oa, sizeof oa) == 0 &&
             std::memcmp(&ob, &o.ob, sizeof ob) == 0;
    }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t x, y;
      std::memcpy(&x, &k.oa, sizeof x);
      std::memcpy(&y, &k.ob, sizeof y);
      std::size_t h = k.ua * 0x9e3779b97f4a7c15ULL;
      h ^= (k.ub + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2));
      h ^= (x + 0x85ebca6bULL + (h << 6) + (h >> 2));
      h ^= (y + 0xc2b2ae35ULL + (h << 6) + (h >> 2));
      return h;
    }
  };
  struct Memo {
    double cost;
    std::vector<int> pairing;
  };

  static constexpr std::size_t kMemoBudget = 400000;
  static constexpr std::size_t kBruteForceCells = 25;

  static Side make_side(const MarkedTree& t) {
    Side s;
    s.segs.resize(t.size());
    s.target.assign(t.size(), TreePoint{});
    s.collapsed.assign(t.size(), false);
    s.collapse_from.assign(t.size(), 0.0);
    return s;
  }

  static std::vector<Entry> children_at(const MarkedTree& t, const TreePoint& p) {
    std::vector<Entry> out;
    if (p.offset < t.length(p.node)) {
      out.push_back({p.node, p.offset});
    } else {
      for (Index c : t.shape().children(p.node)) out.push_back({c, 0.0});
    }
    return out;
  }

  static double entry_height(const MarkedTree& t, const Entry& e) {
    return t.subtree_top(e.node) - (t.base(e.node) + e.offset);
  }

  // Points reached after running both entries up by the shorter remainder.
  std::pair<TreePoint, TreePoint> advance(const Entry& ea, const Entry& eb, double* step = nullptr) const {
    const double rem_a = a_.length(ea.node) - ea.offset;
    const double rem_b = b_.length(eb.node) - eb.offset;
    TreePoint pa{ea.node, a_.length(ea.node)}, pb{eb.node, b_.length(eb.node)};
    double d = rem_a;
    if (rem_a < rem_b) {
      pb.offset = std::min(eb.offset + rem_a, b_.length(eb.node));
    } else if (rem_b < rem_a) {
      d = rem_b;
      pa.offset = std::min(ea.offset + rem_b, a_.length(ea.node));
    }
    if (step) *step = d;
    return {pa, pb};
  }

  double cost(const Entry& ea, const Entry& eb) {
    const Key key{ea.node, ea.offset, eb.node, eb.offset};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second.cost;
    const auto [pa, pb] = advance(ea, eb);
    auto [c, pairing] = bottleneck(children_at(a_, pa), children_at(b_, pb));
    memo_.emplace(key, Memo{c, std::move(pairing)});
    return c;
  }

  // Min over partial injective pairings of the largest pair cost or
  // unmatched height. Returns the partner index in lb for each entry of la.
  std::pair<double, std::vector<int>> bottleneck(const std::vector<Entry>& la, const std::vector<Entry>& lb) {
    const std::size_t p = la.size(), q = lb.size();
    std::vector<double> ha(p), hb(q);
    for (std::size_t i = 0; i < p; ++i) ha[i] = entry_height(a_, la[i]);
    for (std::size_t j = 0; j < q; ++j) hb[j] = entry_height(b_, lb[j]);
    std::vector<int> pairing(p, -1);
    if (p == 0 || q == 0) {
      double c = 0.0;
      for (double h : ha) c = std::max(c, h);
      for (double h : hb) c = std::max(c, h);
      return {c, pairing};
    }
    if (p * q <= kBruteForceCells && memo_.size() < kMemoBudget) {
      std::vector<std::vector<double>> pc(p, std::vector<double>(q));
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) pc[i][j] = cost(la[i], lb[j]);
      std::vector<int> cur(p, -1);
      std::vector<bool> used(q, false);
      double best = std::numeric_limits<double>::infinity();
      std::function<void(std::size_t, double)> rec = [&](std::size_t i, double acc) {
        if (acc >= best) return;
        if (i == p) {
          double c = acc;
          for (std::size_t j = 0; j < q; ++j)
            if (!used[j]) c = std::max(c, hb[j]);
          if (c < best) {
            best = c;
            pairing = cur;
          }
          return;
        }
        for (std::size_t j = 0; j < q; ++j) {
          if (used[j]) continue;
          used[j] = true;
          cur[i] = static_cast<int>(j);
          rec(i + 1, std::max(acc, pc[i][j]));
          used[j] = false;
        }
        cur[i] = -1;
        rec(i + 1, std::max(acc, ha[i]));
      };
      rec(0, 0.0);
      return {best, pairing};
    }
    // Large fan-out: pair by decreasing height.
    std::vector<std::size_t> oa(p), ob(q);
    for (std::size_t i = 0; i < p; ++i) oa[i] = i;
    for (std::size_t j = 0; j < q; ++j) ob[j] = j;
    std::stable_sort(oa.begin(), oa.end(), [&](auto x, auto y) { return ha[x] > ha[y]; });
    std::stable_sort(ob.begin(), ob.end(), [&](auto x, auto y) { return hb[x] > hb[y]; });
    double c = 0.0;
    const std::size_t m = std::min(p, q);
    for (std::size_t k = 0; k < m; ++k) {
      pairing[oa[k]] = static_cast<int>(ob[k]);
      c = std::max(c, std::abs(ha[oa[k]] - hb[ob[k]]));
    }
    for (std::size_t k = m; k < p; ++k) c = std::max(c, ha[oa[k]]);
    for (std::size_t k = m; k < q; ++k) c = std::max(c, hb[ob[k]]);
    return {c, pairing};
  }

  static void collapse(const MarkedTree& t, Side& s, const Entry& e, const TreePoint& target) {
    s.collapsed[e.node] = true;
    s.collapse_from[e.node] = e.offset;
    s.target[e.node] = target;
    const std::size_t sz = t.shape().subtree_size(e.node);
    for (Index k = e.node + 1; k < e.node + sz; ++k) {
      s.collapsed[k] = true;
      s.collapse_from[k] = -1.0;
      s.target[k] = target;
    }
  }

  void emit(const std::vector<Entry>& la, const std::vector<Entry>& lb, const std::vector<int>& pairing,
            const TreePoint& pa, const TreePoint& pb) {
    std::vector<bool> used(lb.size(), false);
    for (std::size_t i = 0; i < la.size(); ++i) {
      if (pairing[i] >= 0) {
        used[static_cast<std::size_t>(pairing[i])] = true;
        work_.emplace_back(la[i], lb[static_cast<std::size_t>(pairing[i])]);
      } else {
        collapse(a_, side_a_, la[i], pb);
      }
    }
    for (std::size_t j = 0; j < lb.size(); ++j) {
      if (!used[j]) collapse(b_, side_b_, lb[j], pa);
    }
  }

  void walk(const Entry& ea, const Entry& eb) {
    double step = 0.0;
    const auto [pa, pb] = advance(ea, eb, &step);
    side_a_.segs[ea.node].push_back({ea.offset, pa.offset, eb.node, eb.offset});
    side_b_.segs[eb.node].push_back({eb.offset, pb.offset, ea.node, ea.offset});
    cost(ea, eb);
    const auto& pairing = memo_.at(Key{ea.node, ea.offset, eb.node, eb.offset}).pairing;
    emit(children_at(a_, pa), children_at(b_, pb), pairing, pa, pb);
  }

  TreePoint map(const Side& s, const TreePoint& p) const {
    const MarkedTree& other = &s == &side_a_ ? b_ : a_;
    if (p.node == 0 && p.offset == 0.0) return {0, 0.0};
    if (s.collapsed[p.node] && p.offset > s.collapse_from[p.node]) return s.target[p.node];
    for (const auto& seg : s.segs[p.node]) {
      if (p.offset >= seg.lo && p.offset <= seg.hi) {
        return {seg.other, std::min(seg.other_lo + (p.offset - seg.lo), other.length(seg.other))};
      }
    }
    // Offset 0 of an unsegmented edge is its parent's top.
    if (p.offset == 0.0 && p.node != 0) {
      const MarkedTree& self = &s == &side_a_ ? a_ : b_;
      const Index par = self.shape().parent(p.node);
      return map(s, {par, self.length(par)});
    }
    return s.target[p.node];
  }

  const MarkedTree& a_;
  const MarkedTree& b_;
  Side side_a_, side_b_;
  std::unordered_map<Key, Memo, KeyHash> memo_;
  std::vector<std::pair<Entry, Entry>> work_;
};

inline double gh_upper_directed(const MarkedTree& a, const MarkedTree& b, double delta) {
  LevelMatcher m(a, b);
  m.run();
  const DeltaNet na = make_delta_net(a, delta), nb = make_delta_net(b, delta);
  std::vector<std::pair<TreePoint, TreePoint>> pairs;
  pairs.reserve(na.points.size() + nb.points.size() + 1);
  pairs.push_back({{0, 0.0}, {0, 0.0}});
  for (const auto& p : na.points) pairs.push_back({p, m.map_a(p)});
  for (const auto& q : nb.points) pairs.push_back({m.map_b(q), q});
  const TreeMetric ma(a), mb(b);
  return 0.5 * max_pair_distortion(pairs, ma, mb) + na.radius + nb.radius;
}

}  // namespace detail

/// Upper bound on the pointed GH distance from an explicit correspondence
/// between delta-nets; the net slack (at most delta) is included.
inline double gh_upper(const MarkedTree& a, const MarkedTree& b, double delta) {
  require(delta > 0.0, "net spacing must be positive");
  const MarkedTree na = normalize(a), nb = normalize(b);
  return std::min(detail::gh_upper_directed(na, nb, delta), detail::gh_upper_directed(nb, na, delta));
}

struct GhBracket {
  double lower = 0.0;
  double upper = 0.0;
  /// Exact half-distortion minimum over net correspondences.
  double net_distance = 0.0;
};

namespace detail {

// Branch and bound for the minimal distortion of a net correspondence.
// Every non-root net point on either side picks a partner; points are
// assigned highest first.
inline double min_net_distortion(const std::vector<std::vector<double>>& da, const std::vector<std::vector<double>>& db,
                                 const std::vector<double>& lva, const std::vector<double>& lvb, std::size_t ra,
                                 std::size_t rb) {
  const std::size_t na = da.size(), nb = db.size();
  struct Var {
    bool side_a;
    std::size_t point;
    double level;
  };
  std::vector<Var> vars;
  for (std::size_t i = 0; i < na; ++i)
    if (i != ra) vars.push_back({true, i, lva[i]});
  for (std::size_t j = 0; j < nb; ++j)
    if (j != rb) vars.push_back({false, j, lvb[j]});
  std::stable_sort(vars.begin(), vars.end(), [](const Var& x, const Var& y) { return x.level > y.level; });
  const std::size_t nv = vars.size();

  std::vector<std::pair<std::size_t, std::size_t>> chosen{{ra, rb}};
  auto pair_cost = [&](std::size_t i, std::size_t j) {
    double c = 0.0;
    for (const auto& [ci, cj] : chosen) c = std::max(c, std::abs(da[i][ci] - db[j][cj]));
    return c;
  };
  // inc[v][c]: distortion of candidate c for variable v against chosen pairs.
  std::vector<std::vector<double>> inc(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const std::size_t m = vars[v].side_a ? nb : na;
    inc[v].resize(m);
    for (std::size_t c = 0; c < m; ++c) {
      inc[v][c] = vars[v].side_a ? pair_cost(vars[v].point, c) : pair_cost(c, vars[v].point);
    }
  }

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> saved;
  std::function<void(std::size_t, double)> rec = [&](std::size_t k, double cur) {
    if (k == nv) {
      best = std::min(best, cur);
      return;
    }
    const Var& var = vars[k];
    const std::size_t m = inc[k].size();
    std::vector<std::size_t> order(m);
    for (std::size_t c = 0; c < m; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return inc[k][x] < inc[k][y]; });
    for (std::size_t c : order) {
      const double val = std::max(cur, inc[k][c]);
      if (val >= best) break;
      const std::size_t i = var.side_a ? var.point : c;
      const std::size_t j = var.side_a ? c : var.point;
      // Update later variables and compute the forward-checking bound.
      double bound = val;
      std::vector<std::vector<double>> snapshot(inc.begin() + static_cast<std::ptrdiff_t>(k + 1), inc.end());
      for (std::size_t w = k + 1; w < nv && bound < best; ++w) {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t cc = 0; cc < inc[w].size(); ++cc) {
          const std::size_t wi = vars[w].side_a ? vars[w].point : cc;
          const std::size_t wj = vars[w].side_a ? cc : vars[w].point;
          inc[w][cc] = std::max(inc[w][cc], std::abs(da[wi][i] - db[wj][j]));
          lo = std::min(lo, inc[w][cc]);
        }
        bound = std::max(bound, lo);
      }
      if (bound < best) {
        chosen.emplace_back(i, j);
        rec(k + 1, val);
        chosen.pop_back();
      }
      std::copy(snapshot.begin(), snapshot.end(), inc.begin() + static_cast<std::ptrdiff_t>(k + 1));
    }
  };
  rec(0, 0.0);
  return best;
}

inline std::size_t root_index(const MarkedTree& t, const std::vector<TreePoint>& pts) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (level(t, pts[i]) == 0.0) return i;
  throw Error(ErrorKind::invalid_argument, "net must contain the root");
}

}  // namespace detail

/// Bracket from the exact net distance D: (max(0, D - ra - rb), D + ra + rb),
/// where ra, rb are the nets' covering radii.
inline GhBracket gh_bracket_small(const MarkedTree& a, const DeltaNet& net_a, const MarkedTree& b,
                                  const DeltaNet& net_b, std::size_t cap = 9) {
  if (net_a.points.size() > cap || net_b.points.size() > cap) {
    throw Error(ErrorKind::instance_too_large, "nets have " + std::to_string(net_a.points.size()) + " and " +
                                                   std::to_string(net_b.points.size()) + " points, cap " +
                                                   std::to_string(cap));
  }
  const TreeMetric ma(a), mb(b);
  auto table = [](const TreeMetric& m, const std::vector<TreePoint>& pts) {
    std::vector<std::vector<double>> d(pts.size(), std::vector<double>(pts.size(), 0.0));
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = 0; j < pts.size(); ++j) d[i][j] = m.distance(pts[i], pts[j]);
    return d;
  };
  std::vector<double> la, lb;
  for (const auto& p : net_a.points) la.push_back(level(a, p));
  for (const auto& p : net_b.points) lb.push_back(level(b, p));
  const double dis = detail::min_net_distortion(table(ma, net_a.points), table(mb, net_b.points), la, lb,
                                                detail::root_index(a, net_a.points), detail::root_index(b, net_b.points));
  GhBracket out;
  out.net_distance = 0.5 * dis;
  out.lower = std::max(0.0, out.net_distance - net_a.radius - net_b.radius);
  out.upper = out.net_distance + net_a.radius + net_b.radius;
  return out;
}

inline GhBracket gh_bracket_small(const MarkedTree& a, const MarkedTree& b, double delta, std::size_t cap = 9) {
  const MarkedTree na = normalize(a), nb = normalize(b);
  return gh_bracket_small(na, make_delta_net(na, delta), nb, make_delta_net(nb, delta), cap);
}

namespace detail {

// If a correspondence has half-distortion <= D, then every family of k
// subtrees above t of height > h in one tree yields k subtrees above t + 3D
// of height >= h - 5D in the other. A profile violating this certifies
// GH > D.
inline bool profile_violated(const MarkedTree& x, const MarkedTree& y, double t, double h, double d) {
  const double h2 = h - 5.0 * d;
  if (h2 <= 0.0) return false;
  const double h2_below = h2 * (1.0 - 1e-9);
  if (h2_below <= 0.0) return false;
  return count_Z(y, t + 3.0 * d, h2_below) < count_Z(x, t, h);
}

}  // namespace detail

/// Certified lower bound: max of half the height gap and the subtree-count
/// profile bound on a grid of (t, h, D).
inline double gh_lower_invariants(const MarkedTree& a, const MarkedTree& b) {
  const double ha = a.height(), hb = b.height();
  double lower = 0.5 * std::abs(ha - hb);
  const double hm = std::max(ha, hb);
  if (hm <= 0.0) return lower;
  constexpr int kD = 64, kT = 16, kH = 16;
  for (int k = kD; k >= 1; --k) {
    const double d = hm / 5.0 * k / kD;
    if (d <= lower) break;
    bool hit = false;
    for (int i = 0; i < kT && !hit; ++i) {
      const double t = hm * i / kT;
      for (int j = 1; j <= kH && !hit; ++j) {
        const double h = hm * j / kH;
        hit = detail::profile_violated(a, b, t, h, d) || detail::profile_violated(b, a, t, h, d);
      }
    }
    if (hit) {
      lower = std::max(lower, d * (1.0 - 1e-9));
      break;
    }
  }
  return lower;
}

}  // namespace regentree
