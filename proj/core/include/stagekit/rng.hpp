#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

#include "stagekit/bytes.hpp"

namespace stagekit {

// Deterministic 64-bit mixing and keyed byte streams. All seeded
// randomness in the project goes through these so that output files are
// byte-identical across platforms and standard-library versions
// (std::uniform_*_distribution is implementation-defined).

inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Sequential generator (splitmix64).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). Unbiased enough for test-data purposes.
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Uniform double in [lo, hi).
  double next_double(double lo, double hi) {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

 private:
  uint64_t state_;
};

// Random-access keyed stream: byte i of stream(key) is a pure function
// of (key, i). Backs simulated file content, so ranged reads at any
// offset reproduce exactly the bytes a full read would produce.
inline void fill_stream(uint64_t key, uint64_t offset, uint8_t* out, size_t len) {
  if (len == 0) return;
  uint64_t block = offset / 8;
  size_t within = static_cast<size_t>(offset % 8);
  size_t produced = 0;
  while (produced < len) {
    uint64_t word = mix64(key ^ (block * 0x9e3779b97f4a7c15ULL));
    uint8_t wordbytes[8];
    for (int i = 0; i < 8; ++i) wordbytes[i] = static_cast<uint8_t>(word >> (8 * i));
    size_t take = 8 - within;
    if (take > len - produced) take = len - produced;
    std::memcpy(out + produced, wordbytes + within, take);
    produced += take;
    within = 0;
    ++block;
  }
}

inline Bytes stream_bytes(uint64_t key, uint64_t offset, size_t len) {
  Bytes b(len);
  fill_stream(key, offset, b.data(), len);
  return b;
}

}  // namespace stagekit
