#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sparsedet {

/// splitmix64 finalizer.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed plus a purpose tag and
/// up to two indices (scene id, iteration, ...). Stateless, so consumers can
/// draw in any order without perturbing each other.
inline uint64_t derive_seed(uint64_t root, uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
  uint64_t s = mix64(root ^ mix64(tag));
  s = mix64(s ^ mix64(a + 0x2545f4914f6cdd1dull));
  s = mix64(s ^ mix64(b + 0x6a09e667f3bcc909ull));
  return s;
}

/// Counter-based splitmix64 generator. Self-contained so corpora, training
/// runs and mock predictions reproduce bit-for-bit independently of the
/// standard library's distribution implementations. State is two words,
/// which keeps checkpoint resume exact.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(mix64(seed ^ 0x853c49e6748fea9bull)), counter_(0) {}

  uint64_t next_u64() { return mix64(seed_ + counter_++ * 0x9e3779b97f4a7c15ull); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Box-Muller; consumes two uniforms per call, no cached state.
  double normal(double mean = 0.0, double sigma = 1.0) {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Knuth's product-of-uniforms method; fine for the small means used here.
  int poisson(double mean) {
    const double limit = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  uint64_t state_seed() const { return seed_; }
  uint64_t state_counter() const { return counter_; }
  void restore(uint64_t seed, uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace sparsedet
