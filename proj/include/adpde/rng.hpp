/// @file rng.hpp
/// @brief Seeded, platform-independent random number generation.
///
/// std::uniform_real_distribution is implementation-defined, which would break
/// the bitwise reproducibility contract across standard libraries. This is a
/// splitmix64 stream with uniform doubles built directly from the raw bits.

#pragma once

#include <cstdint>

namespace adpde {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so that small seeds do not start in a low-entropy state.
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Modulo bias is negligible for the small n used here, but reject anyway.
    std::uint64_t lim = ~std::uint64_t(0) - ~std::uint64_t(0) % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= lim);
    return x % n;
  }

  /// Independent child stream, e.g. one per sample or per patch.
  Rng fork(std::uint64_t stream) const {
    Rng child(state_ ^ (0xD1B54A32D192ED03ull * (stream + 1)));
    return child;
  }

 private:
  std::uint64_t state_;
};

}  // namespace adpde
