#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "regentree/error.hpp"

namespace regentree {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Seed and stream identifier. Identical states give identical draws.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  /// Child stream for replica `index`; depends only on (seed, stream, index).
  RngState derive(std::uint64_t index) const {
    return {seed, detail::splitmix64(stream ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL))};
  }

  friend bool operator==(const RngState&, const RngState&) = default;
};

/// Uniform random bit generator plus the few primitive variates the samplers
/// need. Continuous variates are produced by inversion from 53-bit uniforms.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(RngState state)
      : state_(state), engine_(detail::splitmix64(state.seed) ^ detail::splitmix64(~state.stream)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : Rng(RngState{seed, stream}) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return engine_(); }

  const RngState& state() const { return state_; }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "below(0)");
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Failures before the first success, success probability p.
  std::uint64_t geometric(double p) {
    if (p >= 1.0) return 0;
    return static_cast<std::uint64_t>(std::floor(std::log(uniform_pos()) / std::log1p(-p)));
  }

  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::uint64_t>(mean)(*this);
  }

  std::uint64_t binomial(std::uint64_t trials, double p) {
    if (trials == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return trials;
    return std::binomial_distribution<std::uint64_t>(trials, p)(*this);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  RngState state_;
  std::mt19937_64 engine_;
};

/// Worker count: REGENTREE_THREADS if set, else hardware parallelism.
inline unsigned worker_count() {
  if (const char* env = std::getenv("REGENTREE_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates fn(i) for i in [0, n) and returns the results in index order.
/// Each replica must draw from its own derived stream so the output does not
/// depend on how indices are split across workers.
template <typename Fn>
auto parallel_map(std::size_t n, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using T = decltype(fn(std::size_t{}));
  std::vector<T> out(n);
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace regentree
