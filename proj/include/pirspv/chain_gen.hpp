#pragma once
#include <tuple>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "pirspv/chain.hpp"
#include "pirspv/rng.hpp"

namespace pirspv {

struct ChainConfig {
  std::uint32_t n_blocks = 1;
  std::uint32_t txs_per_block_min = 1;  // non-coinbase transactions
  std::uint32_t txs_per_block_max = 3;
  std::uint32_t n_addresses = 64;
  std::uint32_t outputs_per_tx_min = 1;
  std::uint32_t outputs_per_tx_max = 2;
  double spend_probability = 0.5;
  std::uint32_t difficulty_bits = 0x207fffff;  // near-maximal target, mines in ~1 try
  std::uint64_t seed = 1;

  void validate() const {
    if (n_blocks == 0) throw std::domain_error("chain config: n_blocks must be positive");
    if (txs_per_block_min > txs_per_block_max || outputs_per_tx_min > outputs_per_tx_max)
      throw std::domain_error("chain config: empty distribution range");
    if (outputs_per_tx_min == 0) throw std::domain_error("chain config: transactions need outputs");
    if (outputs_per_tx_max > 255)
      throw std::domain_error("chain config: vout indices are one byte, cap outputs at 255");
    if (n_addresses == 0) throw std::domain_error("chain config: need at least one address");
    if (spend_probability < 0.0 || spend_probability > 1.0)
      throw std::domain_error("chain config: spend_probability out of [0,1]");
  }
};

struct UtxoRef {
  Hash256 txid{};
  std::uint32_t height = 0;
  std::uint8_t vout = 0;
  std::uint64_t value = 0;

  // Height-major, matching the order entries land in the databases.
  friend bool operator<(const UtxoRef& a, const UtxoRef& b) {
    return std::tie(a.height, a.txid, a.vout) < std::tie(b.height, b.txid, b.vout);
  }
  bool operator==(const UtxoRef&) const = default;
};

// Per-address unspent outputs, keyed by hash160.
using UtxoGroundTruth = std::map<Hash160, std::vector<UtxoRef>>;

struct SyntheticChain {
  std::vector<Block> blocks;
  UtxoGroundTruth utxo;
  std::vector<Hash160> addresses;
};

namespace detail {

inline constexpr std::uint64_t kBlockReward = 50ull * 100'000'000ull;
inline constexpr std::uint32_t kGenesisTime = 1231006505;

inline void mine(BlockHeader& header) {
  header.nonce = 0;
  while (!pow_check(header)) ++header.nonce;
}

}  // namespace detail

inline SyntheticChain generate_synthetic_chain(const ChainConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  SyntheticChain chain;
  chain.addresses.resize(cfg.n_addresses);
  for (auto& a : chain.addresses) rng.fill(a);

  auto pick_address = [&]() -> const Hash160& {
    return chain.addresses[rng.below(chain.addresses.size())];
  };

  struct LiveOutput {
    Hash256 txid;
    std::uint8_t vout;
    std::uint32_t height;
    std::uint64_t value;
    Hash160 address;
  };
  std::vector<LiveOutput> pool;  // spendable outputs, in creation order

  auto add_outputs = [&](const Transaction& tx, std::uint32_t height) {
    const Hash256 id = txid(tx);
    for (std::size_t i = 0; i < tx.outputs.size(); ++i)
      pool.push_back({id, static_cast<std::uint8_t>(i), height, tx.outputs[i].value,
                      tx.outputs[i].address_hash160});
  };

  auto make_outputs = [&](std::uint64_t total) {
    const std::uint32_t n = static_cast<std::uint32_t>(
        cfg.outputs_per_tx_min + rng.below(cfg.outputs_per_tx_max - cfg.outputs_per_tx_min + 1));
    std::vector<TxOutput> outs(n);
    std::uint64_t remaining = total;
    for (std::uint32_t i = 0; i < n; ++i) {
      outs[i].address_hash160 = pick_address();
      if (i + 1 == n) {
        outs[i].value = remaining;
      } else {
        // leave at least 1 satoshi per remaining output
        std::uint64_t max_take = remaining - (n - 1 - i);
        outs[i].value = 1 + rng.below(max_take);
        remaining -= outs[i].value;
      }
    }
    return outs;
  };

  Hash256 prev_hash{};
  for (std::uint32_t height = 0; height < cfg.n_blocks; ++height) {
    Block block;
    block.height = height;

    Transaction coinbase;
    // All-zero txid marks the coinbase; the height in the vout field keeps
    // coinbase txids unique even when outputs coincide across blocks.
    coinbase.inputs.push_back(TxInput{Hash256{}, height});
    coinbase.outputs = make_outputs(detail::kBlockReward);
    block.txs.push_back(coinbase);
    add_outputs(coinbase, height);

    if (height > 0) {
      const std::uint32_t attempts = static_cast<std::uint32_t>(
          cfg.txs_per_block_min + rng.below(cfg.txs_per_block_max - cfg.txs_per_block_min + 1));
      for (std::uint32_t a = 0; a < attempts; ++a) {
        if (pool.empty() || !rng.chance(cfg.spend_probability)) continue;
        Transaction tx;
        const std::uint32_t n_in = static_cast<std::uint32_t>(
            1 + rng.below(std::min<std::size_t>(3, pool.size())));
        std::uint64_t in_value = 0;
        for (std::uint32_t i = 0; i < n_in; ++i) {
          const std::size_t idx = rng.below(pool.size());
          const LiveOutput& spend = pool[idx];
          tx.inputs.push_back({spend.txid, spend.vout});
          in_value += spend.value;
          pool[idx] = pool.back();
          pool.pop_back();
        }
        tx.outputs = make_outputs(in_value);
        block.txs.push_back(tx);
        add_outputs(tx, height);
      }
    }

    block.header.version = 1;
    block.header.prev_hash = prev_hash;
    block.header.merkle_root = merkle_root(block_txids(block));
    block.header.time = detail::kGenesisTime + height * 600;
    block.header.bits = cfg.difficulty_bits;
    detail::mine(block.header);
    prev_hash = header_hash(block.header);
    chain.blocks.push_back(std::move(block));
  }

  for (const auto& live : pool)
    chain.utxo[live.address].push_back({live.txid, live.height, live.vout, live.value});
  for (auto& [addr, refs] : chain.utxo) std::sort(refs.begin(), refs.end());
  return chain;
}

}  // namespace pirspv
