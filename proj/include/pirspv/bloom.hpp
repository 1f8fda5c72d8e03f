#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace pirspv {

// MurmurHash3 x86 32-bit.
inline std::uint32_t murmur3_32(std::uint32_t seed, std::span<const std::uint8_t> data) {
  const std::uint32_t c1 = 0xcc9e2d51;
  const std::uint32_t c2 = 0x1b873593;
  std::uint32_t h1 = seed;
  auto rotl = [](std::uint32_t x, int r) { return (x << r) | (x >> (32 - r)); };

  const std::size_t nblocks = data.size() / 4;
  for (std::size_t i = 0; i < nblocks; ++i) {
    std::uint32_t k1 = static_cast<std::uint32_t>(data[4 * i]) |
                       (static_cast<std::uint32_t>(data[4 * i + 1]) << 8) |
                       (static_cast<std::uint32_t>(data[4 * i + 2]) << 16) |
                       (static_cast<std::uint32_t>(data[4 * i + 3]) << 24);
    k1 *= c1;
    k1 = rotl(k1, 15);
    k1 *= c2;
    h1 ^= k1;
    h1 = rotl(h1, 13);
    h1 = h1 * 5 + 0xe6546b64;
  }

  std::uint32_t k1 = 0;
  const std::uint8_t* tail = data.data() + nblocks * 4;
  switch (data.size() & 3) {
    case 3: k1 ^= static_cast<std::uint32_t>(tail[2]) << 16; [[fallthrough]];
    case 2: k1 ^= static_cast<std::uint32_t>(tail[1]) << 8; [[fallthrough]];
    case 1:
      k1 ^= tail[0];
      k1 *= c1;
      k1 = rotl(k1, 15);
      k1 *= c2;
      h1 ^= k1;
  }

  h1 ^= static_cast<std::uint32_t>(data.size());
  h1 ^= h1 >> 16;
  h1 *= 0x85ebca6b;
  h1 ^= h1 >> 13;
  h1 *= 0xc2b2ae35;
  h1 ^= h1 >> 16;
  return h1;
}

// BIP-37 Bloom filter: sizes and hash counts follow the published
// formulas, hash i is murmur with seed i*0xFBA4C795 + tweak. False
// positives only, never false negatives.
class BloomFilter {
 public:
  static constexpr std::size_t kMaxFilterBytes = 36000;
  static constexpr std::uint32_t kMaxHashFuncs = 50;
  static constexpr std::uint32_t kSeedStep = 0xFBA4C795;

  BloomFilter(std::uint32_t n_elements, double fp_rate, std::uint32_t tweak)
      : tweak_(tweak) {
    if (n_elements == 0) throw std::domain_error("bloom: need a positive element count");
    if (fp_rate <= 0.0 || fp_rate >= 1.0) throw std::domain_error("bloom: fp rate in (0,1)");
    const double ln2_squared = std::log(2.0) * std::log(2.0);
    const double ideal_bytes = -1.0 / ln2_squared * n_elements * std::log(fp_rate) / 8.0;
    std::size_t n_bytes = static_cast<std::size_t>(ideal_bytes);
    n_bytes = std::min(std::max<std::size_t>(n_bytes, 1), kMaxFilterBytes);
    bits_.assign(n_bytes, 0);
    const double ideal_hashes = static_cast<double>(n_bytes) * 8.0 / n_elements * std::log(2.0);
    n_hash_funcs_ = std::min(std::max<std::uint32_t>(static_cast<std::uint32_t>(ideal_hashes), 1),
                             kMaxHashFuncs);
  }

  void insert(std::span<const std::uint8_t> data) {
    for (std::uint32_t i = 0; i < n_hash_funcs_; ++i) {
      const std::uint32_t bit = hash(i, data);
      bits_[bit >> 3] |= static_cast<std::uint8_t>(1 << (bit & 7));
    }
  }

  bool contains(std::span<const std::uint8_t> data) const {
    for (std::uint32_t i = 0; i < n_hash_funcs_; ++i) {
      const std::uint32_t bit = hash(i, data);
      if ((bits_[bit >> 3] & (1 << (bit & 7))) == 0) return false;
    }
    return true;
  }

  std::uint32_t n_hash_funcs() const { return n_hash_funcs_; }
  std::uint32_t tweak() const { return tweak_; }
  const std::vector<std::uint8_t>& bit_bytes() const { return bits_; }

 private:
  std::uint32_t hash(std::uint32_t n, std::span<const std::uint8_t> data) const {
    return murmur3_32(n * kSeedStep + tweak_, data) %
           static_cast<std::uint32_t>(bits_.size() * 8);
  }

  std::vector<std::uint8_t> bits_;
  std::uint32_t n_hash_funcs_ = 0;
  std::uint32_t tweak_ = 0;
};

}  // namespace pirspv
