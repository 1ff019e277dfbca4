#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "weakal/errors.hpp"

namespace weakal {

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// Seeded random stream with platform-independent semantics.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard's distribution objects are implementation-defined,
/// so every derived draw below is written out explicitly:
///   uniform()        one engine word, top 53 bits
///   uniform_index(n) rejection sampling on engine words
///   normal()         Marsaglia polar method, second variate discarded
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t word = engine_();
    while (word >= limit) word = engine_();
    return word % n;
  }

  double normal() {
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

  double normal(double mean, double variance) { return mean + std::sqrt(variance) * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace weakal
