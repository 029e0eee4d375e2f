#pragma once

#include <cstdint>

namespace h2ulv {

// SplitMix64: the fixed 64-bit generator used for all randomized inputs
// (point clouds, test matrices). Chosen over std distributions because its
// output stream is identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [-1, 1).
  double next_signed() { return 2.0 * next_double() - 1.0; }

 private:
  uint64_t state_;
};

}  // namespace h2ulv
