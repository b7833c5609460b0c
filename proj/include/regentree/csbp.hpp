#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "regentree/error.hpp"
#include "regentree/offspring.hpp"

namespace regentree {

struct LevyAtom {
  double r = 0.0;
  double weight = 0.0;
};

/// psi(u) = alpha u + beta u^2 + sum w (e^{-u r} - 1 + u r), or, in power
/// mode, psi(u) = c u^p for closed-form families outside that form.
class BranchingMechanism {
 public:
  BranchingMechanism() : BranchingMechanism(0.0, 1.0, {}) {}

  BranchingMechanism(double alpha, double beta, std::vector<LevyAtom> atoms)
      : alpha_(alpha), beta_(beta), atoms_(std::move(atoms)) {
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be nonnegative");
    require(std::isfinite(beta) && beta >= 0.0, "beta must be nonnegative");
    for (const auto& a : atoms_) require(a.r > 0.0 && a.weight > 0.0, "Levy atoms need r > 0 and weight > 0");
    require(alpha > 0.0 || beta > 0.0 || !atoms_.empty(), "psi must not vanish identically");
  }

  static BranchingMechanism quadratic(double beta = 1.0) { return BranchingMechanism(0.0, beta, {}); }

  static BranchingMechanism power(double c, double p) {
    require(c > 0.0, "power mechanism needs c > 0");
    require(p > 1.0 && p <= 2.0, "power mechanism needs p in (1, 2]");
    BranchingMechanism m;
    m.power_ = true;
    m.c_ = c;
    m.p_ = p;
    m.beta_ = 0.0;
    return m;
  }

  bool is_power() const { return power_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  const std::vector<LevyAtom>& atoms() const { return atoms_; }
  double power_c() const { return c_; }
  double power_p() const { return p_; }

  double psi(double u) const {
    if (power_) return c_ * std::pow(u, p_);
    double s = alpha_ * u + beta_ * u * u;
    for (const auto& a : atoms_) s += a.weight * jump_term(u * a.r);
    return s;
  }

  /// x^2 psi(1/x) for x > 0, evaluated without overflow as x -> 0.
  double psi_inverse_scaled(double x) const {
    if (power_) return c_ * std::pow(x, 2.0 - p_);
    double s = alpha_ * x + beta_;
    for (const auto& a : atoms_) s += a.weight * x * (x * jump_term(a.r / x));
    return s;
  }

  double dpsi(double u) const {
    if (power_) return c_ * p_ * std::pow(u, p_ - 1.0);
    double s = alpha_ + 2.0 * beta_ * u;
    for (const auto& a : atoms_) s += a.weight * a.r * -std::expm1(-u * a.r);
    return s;
  }

 private:
  // e^{-x} - 1 + x, accurate near 0.
  static double jump_term(double x) {
    if (x < 1e-3) return x * x * (0.5 - x * (1.0 / 6.0 - x / 24.0));
    return std::expm1(-x) + x;
  }

  double alpha_ = 0.0;
  double beta_ = 0.0;
  std::vector<LevyAtom> atoms_;
  bool power_ = false;
  double c_ = 0.0;
  double p_ = 0.0;
};

inline double psi_eval(const BranchingMechanism& m, double u) {
  require(u >= 0.0, "psi is evaluated on u >= 0");
  return m.psi(u);
}

inline constexpr double kDefaultOdeTol = 1e-10;

namespace detail {

// Adaptive Dormand-Prince integration of x' = rhs(x) over [0, t].
template <typename Rhs>
double integrate_scalar(Rhs rhs, double x0, double t, double tol, double dt0) {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 1>;
  auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_dopri5<State>());
  State x{x0};
  double time = 0.0;
  double dt = std::min(dt0, t);
  auto sys = [&](const State& s, State& dxdt, double) { dxdt[0] = rhs(s[0]); };
  std::size_t attempts = 0;
  while (time < t) {
    if (time + dt > t) dt = t - time;
    if (!(dt > 0.0) || dt < 1e-15 * std::max(1.0, t) || ++attempts > 50000000) {
      throw Error(ErrorKind::step_underflow, "ODE step size underflow at t = " + std::to_string(time));
    }
    const auto res = stepper.try_step(sys, x, time, dt);
    if (res == odeint::fail) continue;
    if (!std::isfinite(x[0])) throw Error(ErrorKind::step_underflow, "ODE solution left the finite range");
  }
  return x[0];
}

}  // namespace detail

/// u(t, lambda) solving du/dt = -psi(u), u(0) = lambda.
inline double u_solve(const BranchingMechanism& m, double t, double lambda, double tol = kDefaultOdeTol) {
  require(t >= 0.0 && lambda >= 0.0, "u_solve needs t >= 0 and lambda >= 0");
  require(tol > 0.0, "tolerance must be positive");
  if (t == 0.0 || lambda == 0.0) return lambda;
  const double slope = m.dpsi(lambda);
  const double dt0 = slope > 0.0 ? 0.01 / slope : t;
  const double u = detail::integrate_scalar([&](double x) { return -m.psi(std::max(x, 0.0)); }, lambda, t, tol, dt0);
  return std::clamp(u, 0.0, lambda);
}

struct ExtinctionVerdict {
  bool finite = false;
  double value = std::numeric_limits<double>::infinity();
};

namespace detail {

// int_v^inf dw / psi(w), through w = 1/x.
inline double tail_integral(const BranchingMechanism& m, double v, double* err = nullptr) {
  if (m.is_power()) {
    const double p = m.power_p();
    if (err) *err = 0.0;
    return std::pow(v, 1.0 - p) / (m.power_c() * (p - 1.0));
  }
  boost::math::quadrature::tanh_sinh<double> integrator;
  auto f = [&](double x) {
    if (x <= 0.0) return 1.0 / m.beta();
    return 1.0 / m.psi_inverse_scaled(x);
  };
  double e = 0.0;
  const double val = integrator.integrate(f, 0.0, 1.0 / v, 1e-13, &e);
  if (err) *err = e;
  return val;
}

}  // namespace detail

/// Verdict on int_1^inf du / psi(u) < inf.
inline ExtinctionVerdict extinction_integral(const BranchingMechanism& m, double tol = 1e-9) {
  if (m.is_power()) return {true, 1.0 / (m.power_c() * (m.power_p() - 1.0))};
  // Without a quadratic part psi grows at most linearly.
  if (m.beta() == 0.0) return {false, std::numeric_limits<double>::infinity()};
  double err = 0.0;
  const double val = detail::tail_integral(m, 1.0, &err);
  if (!std::isfinite(val) || err > tol * std::max(1.0, std::abs(val))) {
    throw Error(ErrorKind::undecided, "quadrature of the extinction integral did not converge");
  }
  return {true, val};
}

/// v(t) = lim u(t, lambda) as lambda -> inf, i.e. the root of
/// int_v^inf dw / psi(w) = t.
inline double v_levy(const BranchingMechanism& m, double t, double tol = kDefaultOdeTol) {
  require(t > 0.0, "v is defined for t > 0");
  if (!extinction_integral(m).finite) throw Error(ErrorKind::immortal_mechanism, "int^inf du / psi(u) diverges");
  if (m.is_power()) {
    const double p = m.power_p();
    return std::pow(m.power_c() * (p - 1.0) * t, 1.0 / (1.0 - p));
  }
  auto g = [&](double y) { return detail::tail_integral(m, std::exp(y)) - t; };
  double lo = 0.0, hi = 0.0;
  if (g(0.0) > 0.0) {
    lo = 0.0;
    hi = 1.0;
    while (g(hi) > 0.0) {
      lo = hi;
      hi *= 2.0;
      if (hi > 700.0) throw Error(ErrorKind::undecided, "v(t) bracket overflow");
    }
  } else {
    hi = 0.0;
    lo = -1.0;
    while (g(lo) <= 0.0) {
      hi = lo;
      lo *= 2.0;
      if (lo < -700.0) throw Error(ErrorKind::undecided, "v(t) bracket underflow");
    }
  }
  std::uintmax_t iters = 200;
  // Relative precision in v well below tol for the v ranges used here.
  const int bits = std::min(52, static_cast<int>(std::ceil(-std::log2(std::max(tol * 1e-2, 1e-16)))));
  auto r = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(bits), iters);
  return std::exp(0.5 * (r.first + r.second));
}

/// Row i of the generator of the integer-valued branching chain.
inline std::map<std::size_t, double> dsbp_generator_row(const FiniteThetaParams& p, std::size_t i) {
  p.validate();
  std::map<std::size_t, double> row;
  if (i == 0) return row;
  const double rate = static_cast<double>(i) * p.a;
  row[i] = -rate;
  for (std::size_t k = 0; k <= p.gamma.max_offspring(); ++k) {
    if (k == 1 || p.gamma.pmf(k) == 0.0) continue;
    row[i - 1 + k] += rate * p.gamma.pmf(k);
  }
  return row;
}

/// v(t) = 1 - F(t), F the extinction probability by time t of the chain
/// started from one individual: v' = -a (f(1 - v) - (1 - v)), v(0) = 1.
inline double dsbp_extinction_ode(const FiniteThetaParams& p, double t, double tol = kDefaultOdeTol) {
  p.validate();
  require(t >= 0.0, "time must be nonnegative");
  if (t == 0.0) return 1.0;
  const double v = detail::integrate_scalar(
      [&](double x) { return -p.a * p.gamma.pgf_defect(std::clamp(x, 0.0, 1.0)); }, 1.0, t, tol, 0.01 / p.a);
  return std::clamp(v, 0.0, 1.0);
}

/// P_t(1, j) for j <= max_state by uniformization in short substeps. Mass
/// pushed above max_state is monitored and must stay below leak_tol.
inline std::vector<double> dsbp_transition_row(const FiniteThetaParams& p, double t, std::size_t max_state = 2000,
                                               double leak_tol = 1e-9) {
  p.validate();
  require(t >= 0.0, "time must be nonnegative");
  require(max_state >= 1, "max_state must be positive");
  std::vector<double> x(max_state + 1, 0.0);
  x[1] = 1.0;
  if (t == 0.0) return x;
  std::vector<std::pair<std::size_t, double>> jumps;  // (k, gamma(k)), k != 1
  for (std::size_t k = 0; k <= p.gamma.max_offspring(); ++k)
    if (k != 1 && p.gamma.pmf(k) > 0.0) jumps.emplace_back(k, p.gamma.pmf(k));

  const double lambda = p.a * static_cast<double>(max_state);
  const auto substeps = static_cast<std::size_t>(std::ceil(lambda * t / 20.0));
  const double dt = t / static_cast<double>(substeps);
  const double mu = lambda * dt;
  std::size_t hi = 1;  // highest state with mass
  std::vector<double> term(max_state + 1), next(max_state + 1), acc(max_state + 1);
  for (std::size_t step = 0; step < substeps; ++step) {
    // acc = sum_n Poisson(mu)(n) x K^n with K = I + Q / lambda.
    term = x;
    double w = std::exp(-mu);
    for (std::size_t j = 0; j <= hi; ++j) acc[j] = w * term[j];
    for (std::size_t j = hi + 1; j <= max_state; ++j) acc[j] = 0.0;
    double cum = w;
    for (std::size_t n = 1; 1.0 - cum > 1e-17 && n < 10000; ++n) {
      std::fill(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(std::min(max_state, hi + jumps.back().first) + 1), 0.0);
      std::size_t new_hi = hi;
      for (std::size_t i = 0; i <= hi; ++i) {
        const double xi = term[i];
        if (xi == 0.0) continue;
        const double out = static_cast<double>(i) * p.a / lambda;
        next[i] += xi * (1.0 - out);
        if (i == 0) continue;
        for (const auto& [k, g] : jumps) {
          const std::size_t j = i - 1 + k;
          if (j <= max_state) {
            next[j] += xi * out * g;
            new_hi = std::max(new_hi, j);
          }
        }
      }
      hi = new_hi;
      term.swap(next);
      w *= mu / static_cast<double>(n);
      cum += w;
      for (std::size_t j = 0; j <= hi; ++j) acc[j] += w * term[j];
    }
    x = acc;
    double total = 0.0;
    for (std::size_t j = 0; j <= hi; ++j) total += x[j];
    const double leak = 1.0 - total;
    if (leak > leak_tol) throw Error(ErrorKind::cap_exceeded, "transition row leaks mass above max_state");
  }
  return x;
}

/// Law of Z(eps, 2 eps) under the finite-case law conditioned on height > eps:
/// individuals alive at eps, each surviving to 2 eps independently.
inline std::vector<double> finite_mu_eps(const FiniteThetaParams& p, double eps, std::size_t max_state = 2000) {
  require(eps > 0.0, "epsilon must be positive");
  const auto row = dsbp_transition_row(p, eps, max_state);
  const double v = dsbp_extinction_ode(p, eps);
  const double alive = 1.0 - row[0];
  std::size_t top = 1;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > 1e-18) top = j;
  std::vector<double> mu(top + 1, 0.0);
  for (std::size_t j = 1; j <= top; ++j) {
    if (row[j] == 0.0) continue;
    boost::math::binomial_distribution<double> bin(static_cast<double>(j), v);
    for (std::size_t k = 0; k <= j; ++k) mu[k] += row[j] * boost::math::pdf(bin, static_cast<double>(k));
  }
  for (double& m : mu) m /= alive;
  return mu;
}

/// k-fold composition of the offspring generating function at s.
inline double gw_laplace_iterate(const OffspringDistribution& g, std::size_t k, double s) {
  require(s >= 0.0 && s <= 1.0, "generating function argument must lie in [0, 1]");
  for (std::size_t i = 0; i < k; ++i) s = g.pgf(s);
  return s;
}

}  // namespace regentree
