#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "cain/common.h"

namespace cain {

// PCG32 (XSH-RR variant): 64-bit LCG state with a 32-bit permuted output.
// Chosen for its tiny explicit state, which serializes into checkpoints,
// and identical sequences on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(uint64_t seed, uint64_t stream = 0) {
    inc_ = (stream << 1u) | 1u;
    state_ = 0u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Uniform on [0, bound) without modulo bias (rejection sampling).
  uint32_t next_below(uint32_t bound) {
    check(bound > 0, "Rng::next_below: bound must be positive");
    uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform integer on the inclusive range [lo, hi].
  int64_t uniform_int(int64_t lo, int64_t hi) {
    check(lo <= hi, "Rng::uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    check(span <= 0xffffffffULL, "Rng::uniform_int: range too wide");
    return lo + static_cast<int64_t>(next_below(static_cast<uint32_t>(span)));
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    uint64_t hi = next_u32();
    uint64_t lo = next_u32();
    uint64_t bits = (hi << 21) ^ (lo >> 11);  // 53 bits
    return static_cast<double>(bits & ((1ULL << 53) - 1)) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (one value per call, no caching, so the
  // draw count stays predictable for determinism tests).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  uint64_t state() const { return state_; }
  uint64_t inc() const { return inc_; }
  void restore(uint64_t state, uint64_t inc) {
    state_ = state;
    inc_ = inc;
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 1;
};

}  // namespace cain
