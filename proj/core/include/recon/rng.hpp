#pragma once

#include <cmath>
#include <cstdint>

namespace recon {

// Counter-based generator: the SplitMix64 stream. The i-th output is
// mix64(seed + (i+1) * 0x9E3779B97F4A7C15), so any position of the stream
// can be computed directly and two generators with the same seed always
// produce the same sequence, independent of platform or thread schedule.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives an independent child seed from (root, index); used wherever one
// root seed fans out into per-sequence / per-member / per-step streams.
inline uint64_t derive_seed(uint64_t root, uint64_t index) {
  return mix64(root ^ mix64(index + 0x9E3779B97F4A7C15ull));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ull;
    return mix64(seed_ + counter_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; fixed algorithm, pairs cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace recon
