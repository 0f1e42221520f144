#pragma once

#include <cstdint>

namespace caforge::rng {

// splitmix64 finalizer. Every random draw in the engine goes through this,
// so runs are bit-reproducible across platforms and thread counts.
constexpr std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based stream derivation: child streams are independent of the
// order in which they are drawn, which lets the backward pass replay the
// forward pass's dropout masks from (seed, step, cell) alone.
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
  return mix(seed ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

// Top 24 bits mapped to [0, 1).
constexpr float u01(std::uint64_t bits) {
  return static_cast<float>(bits >> 40) * (1.0f / 16777216.0f);
}

// Unbiased-enough bounded draw (multiply-shift); n must be > 0.
constexpr std::uint64_t bounded(std::uint64_t bits, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(bits) * n) >> 64);
}

// Sequential counter stream for code that wants generator semantics.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() { return derive(seed_, counter_++); }
  float next_u01() { return u01(next_u64()); }
  std::uint64_t next_below(std::uint64_t n) { return bounded(next_u64(), n); }
  float next_uniform(float lo, float hi) { return lo + (hi - lo) * next_u01(); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace caforge::rng
