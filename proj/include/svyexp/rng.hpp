#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace svyexp {

// SplitMix64 finalizer; used to decorrelate (seed, index) pairs.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. Variates are produced from the raw 64-bit
// engine output with fixed transforms, so a given seed yields the same
// sequence on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(mix64(seed)),
                      static_cast<std::uint32_t>(mix64(seed) >> 32)};
    engine_.seed(seq);
  }

  // Independent substream for replicate `index` of a run seeded with
  // `master`. Results therefore never depend on execution order.
  static Rng substream(std::uint64_t master, std::uint64_t index) {
    return Rng(mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t next() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = -bound % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= limit) return r % bound;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential() { return -std::log(uniform()); }

  // Box-Muller, one variate per call.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace svyexp
