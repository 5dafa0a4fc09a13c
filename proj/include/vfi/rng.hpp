#pragma once

#include <cstdint>

namespace vfi {

// Deterministic 64-bit generator (splitmix64). A given seed produces the
// same draw sequence on every platform, which keeps weight initialization
// and test fixtures bit-reproducible.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 24 bits of mantissa.
  float uniform() { return float(next_u64() >> 40) * 0x1.0p-24f; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0.
  int uniform_int(int n) { return int(next_u64() % std::uint64_t(n)); }

 private:
  std::uint64_t state_;
};

}  // namespace vfi
