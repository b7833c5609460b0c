#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "regentree/coding.hpp"
#include "regentree/csbp.hpp"
#include "regentree/offspring.hpp"
#include "regentree/rng.hpp"
#include "regentree/tree.hpp"

namespace regentree {

inline constexpr std::size_t kDefaultTreeCap = 1000000;
inline constexpr std::size_t kDefaultForestCap = 10000000;

namespace detail {

[[noreturn]] inline void cap_exceeded(std::size_t cap) {
  throw Error(ErrorKind::cap_exceeded, "more than " + std::to_string(cap) + " nodes");
}

}  // namespace detail

/// Total offspring of x independent individuals.
inline std::uint64_t offspring_sum(const OffspringDistribution& g, std::uint64_t x, Rng& rng) {
  if (x == 0) return 0;
  if (g.family() == OffspringDistribution::Family::geometric) {
    return std::negative_binomial_distribution<std::uint64_t>(x, 0.5)(rng);
  }
  const auto& pmf = g.pmf_table();
  std::size_t support = 0;
  if (g.family() == OffspringDistribution::Family::finite) {
    for (double p : pmf) support += p > 0.0;
  }
  if (x <= 32 || support == 0 || support > 16) {
    std::uint64_t s = 0;
    for (std::uint64_t i = 0; i < x; ++i) s += g.sample(rng);
    return s;
  }
  // Multinomial counts by successive binomials.
  std::uint64_t rest = x, total = 0;
  double mass = 1.0;
  for (std::size_t k = 0; k < pmf.size() && rest > 0; ++k) {
    if (pmf[k] == 0.0) continue;
    const double p = mass > 0.0 ? std::min(1.0, pmf[k] / mass) : 1.0;
    const std::uint64_t nk = rng.binomial(rest, p);
    total += k * nk;
    rest -= nk;
    mass -= pmf[k];
  }
  return total;
}

/// Node states for exact sampling of a GW tree conditioned on reaching a
/// generation: survive(r) = subtree height >= r, die(r) = height < r.
class GwConditioner {
 public:
  GwConditioner(const OffspringDistribution& g, std::size_t hmax) : g_(g) {
    require(g.is_subcritical_or_critical(), "offspring law must be critical or subcritical");
    require(g.mean() > 0.0, "offspring law must allow children");
    f0_.assign(hmax + 1, 0.0);
    for (std::size_t j = 1; j <= hmax; ++j) f0_[j] = g.pgf(f0_[j - 1]);
    if (g.family() != OffspringDistribution::Family::geometric) {
      const auto& pmf = g.pmf_table();
      sb_cdf_.resize(pmf.size());
      double c = 0.0;
      for (std::size_t k = 0; k < pmf.size(); ++k) {
        c += static_cast<double>(k) * pmf[k] / g.mean();
        sb_cdf_[k] = c;
      }
      // The stable tail keeps 1 - sb_cdf_.back() for k > kmax.
      if (g.tail_mass() == 0.0) sb_cdf_.back() = 1.0;
    }
  }

  /// P(height < j) = f_j(0).
  double extinct_by(std::size_t j) const { return f0_[j]; }

  enum class Kind : std::uint8_t { free, survive, die };
  struct State {
    Kind kind;
    std::size_t r;
  };

  /// Offspring count and child states for a node in state s; more than
  /// `cap` children throws cap_exceeded.
  void offspring(const State& s, Rng& rng, std::vector<State>& kids,
                 std::size_t cap = std::numeric_limits<std::size_t>::max()) const {
    kids.clear();
    const auto check = [cap](std::uint64_t k) {
      if (k > cap) detail::cap_exceeded(cap);
      return k;
    };
    if (s.kind == Kind::free || (s.kind == Kind::survive && s.r == 0)) {
      kids.assign(check(g_.sample(rng)), State{Kind::free, 0});
      return;
    }
    const double f = f0_[s.r - 1];
    if (s.kind == Kind::die) {
      for (;;) {
        const std::uint64_t k = g_.sample(rng);
        if (k == 0 || rng.uniform() < std::pow(f, static_cast<double>(k))) {
          kids.assign(check(k), State{Kind::die, s.r - 1});
          return;
        }
      }
    }
    const double q = 1.0 - f;
    std::uint64_t k = 0;
    for (;;) {
      k = size_biased(rng);
      const double hit = f > 0.0 ? -std::expm1(static_cast<double>(k) * std::log(f)) : 1.0;
      if (rng.uniform() * static_cast<double>(k) * q < hit) break;
    }
    // First surviving child, then independent survival for the rest.
    std::uint64_t first = 1;
    if (f > 0.0) {
      const double fk = std::pow(f, static_cast<double>(k));
      const double u = rng.uniform();
      first = static_cast<std::uint64_t>(std::ceil(std::log1p(-u * (1.0 - fk)) / std::log(f)));
      first = std::clamp<std::uint64_t>(first, 1, k);
    }
    kids.reserve(check(k));
    for (std::uint64_t i = 1; i <= k; ++i) {
      const bool lives = i == first || (i > first && rng.uniform() < q);
      kids.push_back(i < first || !lives ? State{Kind::die, s.r - 1} : State{Kind::survive, s.r - 1});
    }
  }

 private:
  std::uint64_t size_biased(Rng& rng) const {
    if (g_.family() == OffspringDistribution::Family::geometric) return 1 + rng.geometric(0.5) + rng.geometric(0.5);
    const double u = rng.uniform();
    if (u >= sb_cdf_.back()) return g_.sample_tail(rng, g_.alpha());
    const auto it = std::upper_bound(sb_cdf_.begin(), sb_cdf_.end(), u);
    return static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - sb_cdf_.begin(), static_cast<std::ptrdiff_t>(sb_cdf_.size()) - 1));
  }

  const OffspringDistribution& g_;
  std::vector<double> f0_;
  std::vector<double> sb_cdf_;
};

namespace detail {

// Preorder generation; nodes at depth max_generation get no children.
inline OrderedTree grow_tree(const GwConditioner& c, GwConditioner::State root, Rng& rng, std::size_t cap,
                             std::size_t max_generation) {
  std::vector<std::uint32_t> counts;
  struct Item {
    GwConditioner::State s;
    std::size_t depth;
  };
  std::vector<Item> stack{{root, 0}};
  std::vector<GwConditioner::State> kids;
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    if (counts.size() >= cap) cap_exceeded(cap);
    if (it.depth >= max_generation) {
      counts.push_back(0);
      continue;
    }
    c.offspring(it.s, rng, kids, cap);
    counts.push_back(static_cast<std::uint32_t>(kids.size()));
    if (stack.size() + kids.size() > cap) cap_exceeded(cap);
    for (auto k = kids.rbegin(); k != kids.rend(); ++k) stack.push_back({*k, it.depth + 1});
  }
  return OrderedTree(std::move(counts));
}

}  // namespace detail

inline OrderedTree sample_gw_tree(const OffspringDistribution& g, Rng& rng, std::size_t cap = kDefaultTreeCap) {
  require(g.is_subcritical_or_critical(), "offspring law must be critical or subcritical");
  std::vector<std::uint32_t> counts;
  std::uint64_t pending = 1;
  while (pending > 0) {
    --pending;
    if (counts.size() >= cap) detail::cap_exceeded(cap);
    const std::uint64_t k = g.sample(rng);
    counts.push_back(static_cast<std::uint32_t>(k));
    pending += k;
    if (counts.size() + pending > cap) detail::cap_exceeded(cap);
  }
  // Depth-first generation: the i-th entry is the i-th node in preorder.
  return OrderedTree(std::move(counts));
}

/// Rejection sampler for the law conditioned on height >= hmin.
inline OrderedTree sample_gw_tree_cond_height(const OffspringDistribution& g, std::size_t hmin, Rng& rng,
                                              std::size_t max_rejects = 1000000, std::size_t cap = kDefaultTreeCap) {
  for (std::size_t attempt = 0; attempt <= max_rejects; ++attempt) {
    OrderedTree t = sample_gw_tree(g, rng, cap);
    if (t.max_depth() >= hmin) return t;
  }
  throw Error(ErrorKind::conditioning_too_rare, "no tree of height >= " + std::to_string(hmin) + " in " +
                                                    std::to_string(max_rejects) + " attempts");
}

/// Exact sampler for the law conditioned on height >= hmin, built top-down
/// from the generating-function iterates.
inline OrderedTree sample_gw_tree_conditioned(const OffspringDistribution& g, std::size_t hmin, Rng& rng,
                                              std::size_t cap = kDefaultTreeCap,
                                              std::size_t max_generation = std::numeric_limits<std::size_t>::max()) {
  require(max_generation >= hmin, "truncation must not cut below the conditioning level");
  const GwConditioner c(g, std::max<std::size_t>(hmin, 1));
  return detail::grow_tree(c, {GwConditioner::Kind::survive, hmin}, rng, cap, max_generation);
}

/// Generation sizes X_0 = x0, ..., X_gens.
inline std::vector<std::uint64_t> sample_gw_process(const OffspringDistribution& g, std::uint64_t x0,
                                                    std::size_t gens, Rng& rng) {
  std::vector<std::uint64_t> x{x0};
  for (std::size_t k = 0; k < gens; ++k) {
    const std::uint64_t prev = x.back();
    if (prev > (std::uint64_t{1} << 62) / std::max<std::uint64_t>(1, std::min<std::uint64_t>(g.max_offspring(), 1u << 20))) {
      throw Error(ErrorKind::cap_exceeded, "population overflow in the GW process");
    }
    x.push_back(offspring_sum(g, prev, rng));
  }
  return x;
}

/// Finite-case tree: shape from Pi_gamma, all lengths i.i.d. Exp(a). With a
/// finite max_level, the tree is restricted to levels <= max_level.
inline MarkedTree sample_finite_theta(const FiniteThetaParams& p, Rng& rng, std::size_t cap = kDefaultTreeCap,
                                      double max_level = std::numeric_limits<double>::infinity()) {
  p.validate();
  std::vector<std::uint32_t> counts;
  std::vector<double> lens;
  std::vector<double> stack{0.0};  // base levels of pending nodes
  while (!stack.empty()) {
    const double base = stack.back();
    stack.pop_back();
    if (counts.size() >= cap) detail::cap_exceeded(cap);
    const double h = rng.exponential(p.a);
    if (base + h >= max_level) {
      counts.push_back(0);
      lens.push_back(max_level - base);
      continue;
    }
    const std::uint64_t k = p.gamma.sample(rng);
    counts.push_back(static_cast<std::uint32_t>(k));
    lens.push_back(h);
    if (stack.size() + k > cap) detail::cap_exceeded(cap);
    for (std::uint64_t i = 0; i < k; ++i) stack.push_back(base + h);
  }
  return MarkedTree(OrderedTree(std::move(counts)), std::move(lens));
}

/// Rejection sampler for the finite-case law conditioned on height > h.
inline MarkedTree sample_finite_theta_above(const FiniteThetaParams& p, double h, Rng& rng,
                                            std::size_t cap = kDefaultTreeCap,
                                            double max_level = std::numeric_limits<double>::infinity(),
                                            std::size_t max_rejects = 1000000) {
  require(max_level > h, "truncation must stay above the conditioning level");
  for (std::size_t attempt = 0; attempt <= max_rejects; ++attempt) {
    MarkedTree t = sample_finite_theta(p, rng, cap, max_level);
    if (t.height() > h) return t;
  }
  throw Error(ErrorKind::conditioning_too_rare, "no finite-case tree above height " + std::to_string(h));
}

struct LevyFamily {
  enum class Kind { quadratic, stable } kind = Kind::quadratic;
  double alpha = 2.0;

  static LevyFamily quadratic() { return {}; }
  static LevyFamily stable(double alpha) { return {Kind::stable, alpha}; }

  OffspringDistribution offspring() const {
    return kind == Kind::quadratic ? OffspringDistribution::geometric_half() : OffspringDistribution::stable(alpha);
  }

  /// Generations per unit height.
  std::size_t scale(std::size_t n) const {
    if (kind == Kind::quadratic) return n;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), alpha - 1.0))));
  }
};

/// GW tree conditioned on height >= [a m_n], edges scaled to 1/m_n. Holds
/// the offspring table and conditioning iterates for repeated draws.
class ApproxLevyTreeSampler {
 public:
  ApproxLevyTreeSampler(const LevyFamily& family, std::size_t n, double a,
                        double max_level = std::numeric_limits<double>::infinity())
      : g_(std::make_shared<const OffspringDistribution>(checked(family, n, a).offspring())),
        m_(family.scale(n)),
        hmin_(static_cast<std::size_t>(std::floor(a * static_cast<double>(m_)))),
        max_gen_(std::isfinite(max_level)
                     ? std::max(hmin_, static_cast<std::size_t>(std::ceil(max_level * static_cast<double>(m_))))
                     : std::numeric_limits<std::size_t>::max()),
        cond_(*g_, std::max<std::size_t>(hmin_, 1)) {}

  MarkedTree operator()(Rng& rng, std::size_t cap = kDefaultTreeCap) const {
    const OrderedTree t = detail::grow_tree(cond_, {GwConditioner::Kind::survive, hmin_}, rng, cap, max_gen_);
    std::vector<double> lens(t.size(), 1.0 / static_cast<double>(m_));
    lens[0] = 0.0;
    return MarkedTree(t, std::move(lens));
  }

 private:
  static const LevyFamily& checked(const LevyFamily& family, std::size_t n, double a) {
    require(n >= 10, "approximation index n must be at least 10");
    require(a > 0.0, "conditioning level must be positive");
    return family;
  }

  std::shared_ptr<const OffspringDistribution> g_;
  std::size_t m_, hmin_, max_gen_;
  GwConditioner cond_;
};

inline MarkedTree sample_approx_levy_tree(const LevyFamily& family, std::size_t n, double a, Rng& rng,
                                          std::size_t cap = kDefaultTreeCap,
                                          double max_level = std::numeric_limits<double>::infinity()) {
  return ApproxLevyTreeSampler(family, n, a, max_level)(rng, cap);
}

struct CensoredHeight {
  double height = 0.0;
  bool censored = false;
};

/// Height of the conditioned approximate Levy tree from its generation
/// sizes only, by rejection on the height; censored at `censor`.
class ApproxLevyHeightSampler {
 public:
  ApproxLevyHeightSampler(const LevyFamily& family, std::size_t n, double a, double censor)
      : g_(checked(family, n, a, censor).offspring()),
        m_(family.scale(n)),
        hmin_(static_cast<std::size_t>(std::floor(a * static_cast<double>(m_)))),
        gmax_(static_cast<std::size_t>(std::ceil(censor * static_cast<double>(m_)))) {}

  CensoredHeight operator()(Rng& rng, std::size_t max_rejects = 10000000) const {
    for (std::size_t attempt = 0; attempt <= max_rejects; ++attempt) {
      std::uint64_t x = 1;
      std::size_t gen = 0;
      while (x > 0 && gen < gmax_) {
        x = offspring_sum(g_, x, rng);
        if (x > (std::uint64_t{1} << 40)) throw Error(ErrorKind::cap_exceeded, "population overflow");
        if (x > 0) ++gen;
      }
      if (gen < hmin_) continue;
      if (x > 0) return {static_cast<double>(gmax_) / static_cast<double>(m_), true};
      return {static_cast<double>(gen) / static_cast<double>(m_), false};
    }
    throw Error(ErrorKind::conditioning_too_rare, "height conditioning failed");
  }

 private:
  static const LevyFamily& checked(const LevyFamily& family, std::size_t n, double a, double censor) {
    require(n >= 10, "approximation index n must be at least 10");
    require(censor > a, "censoring level must exceed the conditioning level");
    return family;
  }

  OffspringDistribution g_;
  std::size_t m_, hmin_, gmax_;
};

inline CensoredHeight sample_approx_levy_height(const LevyFamily& family, std::size_t n, double a, Rng& rng,
                                                double censor, std::size_t max_rejects = 10000000) {
  return ApproxLevyHeightSampler(family, n, a, censor)(rng, max_rejects);
}

/// Uniform Dyck path with n up-steps via the cycle lemma, steps +-1/sqrt(n)
/// over time 1/(2n).
inline Excursion sample_dyck_excursion(std::size_t n, Rng& rng) {
  require(n >= 1, "Dyck path needs n >= 1");
  std::vector<int> steps(2 * n + 1, -1);
  for (std::size_t i = 0; i < n; ++i) steps[i] = 1;
  rng.shuffle(steps);
  // Rotate to start right after the first minimum of the partial sums.
  long sum = 0, best = 0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    sum += steps[i];
    if (sum < best) {
      best = sum;
      arg = i + 1;
    }
  }
  std::rotate(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(arg % steps.size()), steps.end());
  const double dx = 1.0 / std::sqrt(static_cast<double>(n));
  const double dt = 1.0 / (2.0 * static_cast<double>(n));
  std::vector<Breakpoint> pts;
  pts.reserve(2 * n + 1);
  pts.push_back({0.0, 0.0});
  long h = 0;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    h += steps[i];
    pts.push_back({static_cast<double>(i + 1) * dt, static_cast<double>(h) * dx});
  }
  pts.back().g = 0.0;
  return Excursion(std::move(pts));
}

/// Piecewise-constant path: state[i] holds on [time[i], time[i + 1]).
struct DsbpPath {
  std::vector<double> time;
  std::vector<std::uint64_t> state;
  double t_max = 0.0;

  std::uint64_t at(double t) const {
    const auto it = std::upper_bound(time.begin(), time.end(), t);
    return state[static_cast<std::size_t>(it - time.begin()) - 1];
  }
  bool extinct() const { return state.back() == 0; }
};

inline DsbpPath sample_dsbp_path(const FiniteThetaParams& p, std::uint64_t y0, double t_max, Rng& rng,
                                 std::uint64_t cap = kDefaultForestCap) {
  p.validate();
  require(t_max >= 0.0, "time horizon must be nonnegative");
  DsbpPath path;
  path.t_max = t_max;
  path.time.push_back(0.0);
  path.state.push_back(y0);
  double t = 0.0;
  std::uint64_t y = y0;
  while (y > 0) {
    t += rng.exponential(static_cast<double>(y) * p.a);
    if (t > t_max) break;
    y = y - 1 + p.gamma.sample(rng);
    if (y > cap) throw Error(ErrorKind::cap_exceeded, "population above " + std::to_string(cap));
    path.time.push_back(t);
    path.state.push_back(y);
  }
  return path;
}

/// Poisson(intensity) many i.i.d. trees from `draw`.
template <typename Draw>
std::vector<MarkedTree> sample_poisson_forest(Draw&& draw, double intensity, Rng& rng,
                                              std::size_t cap = kDefaultForestCap) {
  require(std::isfinite(intensity) && intensity >= 0.0, "intensity must be finite and nonnegative");
  const std::uint64_t count = rng.poisson(intensity);
  std::vector<MarkedTree> forest;
  forest.reserve(count);
  std::size_t nodes = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    forest.push_back(draw(rng));
    nodes += forest.back().size();
    if (nodes > cap) detail::cap_exceeded(cap);
  }
  return forest;
}

/// Forest of finite-case trees conditioned above delta with intensity v(delta).
inline std::vector<MarkedTree> sample_finite_poisson_forest(const FiniteThetaParams& p, double delta, Rng& rng,
                                                            double max_level = std::numeric_limits<double>::infinity(),
                                                            std::size_t cap = kDefaultForestCap) {
  const double intensity = dsbp_extinction_ode(p, delta);
  return sample_poisson_forest(
      [&](Rng& r) { return sample_finite_theta_above(p, delta, r, kDefaultTreeCap, max_level); }, intensity, rng, cap);
}

/// Forest of approximate Levy trees conditioned above delta with intensity
/// v(delta) from the limiting mechanism.
inline std::vector<MarkedTree> sample_levy_poisson_forest(const LevyFamily& family, std::size_t n, double delta,
                                                          Rng& rng,
                                                          double max_level = std::numeric_limits<double>::infinity(),
                                                          std::size_t cap = kDefaultForestCap) {
  const BranchingMechanism psi = family.kind == LevyFamily::Kind::quadratic
                                     ? BranchingMechanism::quadratic()
                                     : BranchingMechanism::power(1.0, family.alpha);
  const double intensity = v_levy(psi, delta);
  const ApproxLevyTreeSampler draw(family, n, delta, max_level);
  return sample_poisson_forest([&](Rng& r) { return draw(r); }, intensity, rng, cap);
}

}  // namespace regentree
