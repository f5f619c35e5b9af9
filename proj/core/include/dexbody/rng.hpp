#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dexbody {

/// Deterministic random stream. mt19937_64 output is pinned by the standard;
/// the distribution mappings here are hand-rolled so sequences are identical
/// on every platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Derive an independent stream, e.g. per environment or per iteration.
  static Rng derive(uint64_t seed, uint64_t stream) {
    // splitmix64 scramble of (seed, stream)
    uint64_t x = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return Rng(x);
  }

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    // Rejection-free modulo is fine here; n is tiny relative to 2^64.
    return n == 0 ? 0 : gen_() % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(static_cast<uint64_t>(hi - lo + 1)));
  }

  /// Standard normal via Box-Muller (no cached spare; keeps the stream
  /// position a pure function of call count).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace dexbody
