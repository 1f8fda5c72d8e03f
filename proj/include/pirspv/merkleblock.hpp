#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "pirspv/chain.hpp"

namespace pirspv {

inline std::size_t varint_size(std::uint64_t v) {
  if (v < 0xfd) return 1;
  if (v <= 0xffff) return 3;
  if (v <= 0xffffffff) return 5;
  return 9;
}

// Partial Merkle tree over a block's txids: carries the hashes needed to
// reconstruct the root given flag bits marking matched subtrees.
class PartialMerkleTree {
 public:
  PartialMerkleTree() = default;

  PartialMerkleTree(const std::vector<Hash256>& txids, const std::vector<bool>& matches)
      : n_transactions_(static_cast<std::uint32_t>(txids.size())) {
    if (txids.empty()) throw std::domain_error("partial merkle tree: empty block");
    if (txids.size() != matches.size())
      throw std::invalid_argument("partial merkle tree: match flags mismatch");
    int height = 0;
    while (tree_width(height) > 1) ++height;
    build(height, 0, txids, matches);
  }

  // Recomputes the root and collects matched txids; throws on malformed trees.
  Hash256 extract_matches(std::vector<Hash256>& matched) const {
    matched.clear();
    if (n_transactions_ == 0) throw std::domain_error("partial merkle tree: empty");
    std::size_t bits_used = 0, hashes_used = 0;
    int height = 0;
    while (tree_width(height) > 1) ++height;
    Hash256 root = traverse_extract(height, 0, bits_used, hashes_used, matched);
    if (bits_used != flags_.size() || hashes_used != hashes_.size())
      throw std::invalid_argument("partial merkle tree: trailing data");
    return root;
  }

  std::uint32_t n_transactions() const { return n_transactions_; }
  const std::vector<Hash256>& hashes() const { return hashes_; }
  const std::vector<bool>& flags() const { return flags_; }

  // varint(#hashes) + hashes + varint(#flag bytes) + flag bits packed 8/byte,
  // plus the u32 transaction count.
  std::size_t serialized_size() const {
    const std::size_t flag_bytes = (flags_.size() + 7) / 8;
    return 4 + varint_size(hashes_.size()) + 32 * hashes_.size() + varint_size(flag_bytes) +
           flag_bytes;
  }

 private:
  std::uint32_t tree_width(int height) const {
    return (n_transactions_ + (1u << height) - 1) >> height;
  }

  static Hash256 hash_pair(const Hash256& left, const Hash256& right) {
    std::array<std::uint8_t, 64> cat{};
    std::memcpy(cat.data(), left.data(), 32);
    std::memcpy(cat.data() + 32, right.data(), 32);
    return dsha256(cat);
  }

  Hash256 calc_hash(int height, std::uint32_t pos, const std::vector<Hash256>& txids) const {
    if (height == 0) return txids[pos];
    Hash256 left = calc_hash(height - 1, pos * 2, txids);
    Hash256 right =
        (pos * 2 + 1 < tree_width(height - 1)) ? calc_hash(height - 1, pos * 2 + 1, txids) : left;
    return hash_pair(left, right);
  }

  void build(int height, std::uint32_t pos, const std::vector<Hash256>& txids,
             const std::vector<bool>& matches) {
    bool parent_of_match = false;
    for (std::uint32_t p = pos << height;
         p < (pos + 1u) << height && p < n_transactions_; ++p)
      parent_of_match = parent_of_match || matches[p];
    flags_.push_back(parent_of_match);
    if (height == 0 || !parent_of_match) {
      hashes_.push_back(calc_hash(height, pos, txids));
    } else {
      build(height - 1, pos * 2, txids, matches);
      if (pos * 2 + 1 < tree_width(height - 1)) build(height - 1, pos * 2 + 1, txids, matches);
    }
  }

  Hash256 traverse_extract(int height, std::uint32_t pos, std::size_t& bits_used,
                           std::size_t& hashes_used, std::vector<Hash256>& matched) const {
    if (bits_used >= flags_.size())
      throw std::invalid_argument("partial merkle tree: flag bits exhausted");
    const bool parent_of_match = flags_[bits_used++];
    if (height == 0 || !parent_of_match) {
      if (hashes_used >= hashes_.size())
        throw std::invalid_argument("partial merkle tree: hash list exhausted");
      const Hash256& h = hashes_[hashes_used++];
      if (height == 0 && parent_of_match) matched.push_back(h);
      return h;
    }
    Hash256 left = traverse_extract(height - 1, pos * 2, bits_used, hashes_used, matched);
    Hash256 right = left;
    if (pos * 2 + 1 < tree_width(height - 1)) {
      right = traverse_extract(height - 1, pos * 2 + 1, bits_used, hashes_used, matched);
      if (right == left)
        throw std::invalid_argument("partial merkle tree: duplicate subtree");
    }
    return hash_pair(left, right);
  }

  std::uint32_t n_transactions_ = 0;
  std::vector<Hash256> hashes_;
  std::vector<bool> flags_;
};

// Block header plus the partial tree proving the matched txids.
struct MerkleBlock {
  BlockHeader header;
  PartialMerkleTree tree;
  std::vector<Hash256> matched_txids;

  std::size_t serialized_size() const {
    return BlockHeader::kSerializedSize + tree.serialized_size();
  }
};

}  // namespace pirspv
