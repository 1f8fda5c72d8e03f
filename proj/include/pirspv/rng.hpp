#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace pirspv {

// xoshiro256** seeded through splitmix64. Used everywhere a reproducible
// byte/integer stream is needed (query blinding, chain generation, sampling);
// std::uniform_int_distribution is avoided because its output is not pinned
// by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      s = z ^ (z >> 31);
    }
  }

  static Rng from_entropy() {
    std::random_device rd;
    std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    return Rng(seed);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, bound). bound must be nonzero.
  std::uint64_t below(std::uint64_t bound) {
    // Rejection sampling on the top range keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  std::uint8_t next_byte() { return static_cast<std::uint8_t>(next_u64() & 0xff); }

  // Bernoulli draw with probability p.
  bool chance(double p) {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 < p;
  }

  void fill(std::span<std::uint8_t> out) {
    std::size_t i = 0;
    while (i + 8 <= out.size()) {
      std::uint64_t x = next_u64();
      for (int k = 0; k < 8; ++k) out[i++] = static_cast<std::uint8_t>(x >> (8 * k));
    }
    if (i < out.size()) {
      std::uint64_t x = next_u64();
      while (i < out.size()) {
        out[i++] = static_cast<std::uint8_t>(x & 0xff);
        x >>= 8;
      }
    }
  }

  // Derive an independent stream; used to hand sub-seeds to components.
  std::uint64_t fork_seed() { return next_u64() ^ 0xa5a5a5a55a5a5a5aULL; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace pirspv
