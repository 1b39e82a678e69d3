#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace trafficshape {

// Deterministic random source. mt19937_64 output is pinned by the standard
// and all distribution transforms are implemented here by hand, so a given
// seed produces the same stream on every platform and toolchain.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Independent substream for (seed, stream_id), e.g. one per session.
  static Rng substream(uint64_t seed, uint64_t stream_id) {
    return Rng(mix(seed ^ mix(stream_id + 0x9e3779b97f4a7c15ull)));
  }

  uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range.
  int uniform_int(int lo, int hi) {
    return lo + int(eng_() % uint64_t(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double lognormal(double log_mean, double log_sigma) {
    return std::exp(log_mean + log_sigma * normal());
  }

  // Marsaglia-Tsang; the shape < 1 case goes through the boost identity
  // Gamma(a) = Gamma(a + 1) * U^(1/a).
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = 1.0 - uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  // Fisher-Yates over [0, n); returns the permutation as new index order.
  std::vector<int> permutation(int n) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = uniform_int(0, i);
      std::swap(order[i], order[j]);
    }
    return order;
  }

 private:
  static uint64_t mix(uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace trafficshape
