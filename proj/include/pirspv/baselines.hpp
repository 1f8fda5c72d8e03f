#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pirspv/bloom.hpp"
#include "pirspv/chain.hpp"
#include "pirspv/merkleblock.hpp"

namespace pirspv {

// Builds the merkleblock a filter-carrying peer would return for this
// block: matched leaves are the txids the filter accepts (true hits and
// false positives alike).
inline MerkleBlock build_merkleblock(const Block& block, const BloomFilter& filter) {
  auto ids = block_txids(block);
  std::vector<bool> matches(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) matches[i] = filter.contains(ids[i]);
  MerkleBlock mb;
  mb.header = block.header;
  mb.tree = PartialMerkleTree(ids, matches);
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (matches[i]) mb.matched_txids.push_back(ids[i]);
  return mb;
}

struct Bip37Cost {
  std::uint64_t merkleblock_bytes = 0;
  std::uint64_t tx_bytes = 0;
  std::uint64_t matched_blocks = 0;
  std::uint64_t matched_txs = 0;

  std::uint64_t total() const { return merkleblock_bytes + tx_bytes; }
};

// Bandwidth a filter-based scan of `blocks` costs for one txid: a fresh
// filter per txid, one merkleblock per block with at least one match, and
// every matched transaction's bytes. The 24-byte network message header is
// excluded throughout.
inline Bip37Cost bip37_bandwidth(const Hash256& target_txid, std::span<const Block> blocks,
                                 double fp_rate, std::uint32_t tweak) {
  BloomFilter filter(1, fp_rate, tweak);
  filter.insert(target_txid);

  Bip37Cost cost;
  bool found = false;
  for (const auto& block : blocks) {
    auto ids = block_txids(block);
    std::vector<bool> matches(ids.size());
    bool any = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      matches[i] = filter.contains(ids[i]);
      any = any || matches[i];
      found = found || ids[i] == target_txid;
    }
    if (!any) continue;
    MerkleBlock mb;
    mb.header = block.header;
    mb.tree = PartialMerkleTree(ids, matches);
    cost.merkleblock_bytes += mb.serialized_size();
    cost.matched_blocks += 1;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!matches[i]) continue;
      cost.tx_bytes += block.txs[i].serialized_size();
      cost.matched_txs += 1;
    }
  }
  if (!found) throw std::domain_error("bip37: txid not present in the scanned blocks");
  return cost;
}

// Naive SPV: download every block from genesis through the containing
// block, inclusive.
inline std::uint64_t naive_bandwidth(const Hash256& target_txid, std::span<const Block> blocks) {
  std::optional<std::uint32_t> containing;
  for (const auto& block : blocks) {
    for (const auto& tx : block.txs)
      if (txid(tx) == target_txid) {
        containing = block.height;
        break;
      }
    if (containing) break;
  }
  if (!containing) throw std::domain_error("naive: txid not present in the chain");
  std::uint64_t total = 0;
  for (const auto& block : blocks) {
    if (block.height > *containing) break;
    total += block.serialized_size();
  }
  return total;
}

}  // namespace pirspv
