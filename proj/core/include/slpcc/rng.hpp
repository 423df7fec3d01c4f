#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace slpcc {

// Deterministic random helpers. std::mt19937_64 has a fixed bitstream, but the
// standard distributions are implementation-defined; these wrappers pin the
// mapping so seeded runs reproduce across toolchains.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi] inclusive, unbiased via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    if (span == 0) return int64_t(gen_());  // full 64-bit range
    uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % span + 1) % span;
    uint64_t x;
    do { x = gen_(); } while (x > limit);
    return lo + int64_t(x % span);
  }

  // Uniform in [lo, hi).
  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two draws per call.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
  std::mt19937_64 gen_;
};

}  // namespace slpcc
