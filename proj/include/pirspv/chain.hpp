#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirspv/base58.hpp"
#include "pirspv/hex.hpp"
#include "pirspv/sha256.hpp"

namespace pirspv {

using Hash160 = std::array<std::uint8_t, 20>;

namespace le {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace le

// Real Bitcoin header layout: 80 bytes, little-endian integers, hashes raw.
struct BlockHeader {
  std::uint32_t version = 1;
  Hash256 prev_hash{};
  Hash256 merkle_root{};
  std::uint32_t time = 0;
  std::uint32_t bits = 0;
  std::uint32_t nonce = 0;

  static constexpr std::size_t kSerializedSize = 80;

  std::array<std::uint8_t, kSerializedSize> serialize() const {
    std::array<std::uint8_t, kSerializedSize> out{};
    std::size_t at = 0;
    auto put32 = [&](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) out[at++] = static_cast<std::uint8_t>(v >> (8 * i));
    };
    put32(version);
    std::memcpy(out.data() + at, prev_hash.data(), 32);
    at += 32;
    std::memcpy(out.data() + at, merkle_root.data(), 32);
    at += 32;
    put32(time);
    put32(bits);
    put32(nonce);
    return out;
  }

  static BlockHeader deserialize(std::span<const std::uint8_t> in) {
    if (in.size() < kSerializedSize) throw std::invalid_argument("header: short buffer");
    BlockHeader h;
    h.version = le::get_u32(in, 0);
    std::memcpy(h.prev_hash.data(), in.data() + 4, 32);
    std::memcpy(h.merkle_root.data(), in.data() + 36, 32);
    h.time = le::get_u32(in, 68);
    h.bits = le::get_u32(in, 72);
    h.nonce = le::get_u32(in, 76);
    return h;
  }

  bool operator==(const BlockHeader&) const = default;
};

inline Hash256 header_hash(const BlockHeader& header) {
  auto bytes = header.serialize();
  return dsha256(bytes);
}

// Expands a compact difficulty target to a 256-bit little-endian integer.
// Follows the Bitcoin compact encoding: low 23 bits mantissa, high byte is
// a base-256 exponent. Negative or overflowing encodings are rejected.
inline std::array<std::uint8_t, 32> expand_compact_target(std::uint32_t bits) {
  const std::uint32_t exponent = bits >> 24;
  std::uint32_t mantissa = bits & 0x007fffff;
  if (bits & 0x00800000) throw std::domain_error("compact target: negative");
  std::array<std::uint8_t, 32> target{};
  if (mantissa == 0) return target;
  if (exponent <= 3) {
    mantissa >>= 8 * (3 - exponent);
    for (int i = 0; i < 3; ++i) target[i] = static_cast<std::uint8_t>(mantissa >> (8 * i));
  } else {
    const std::uint32_t shift = exponent - 3;
    for (int i = 0; i < 3; ++i) {
      const std::uint8_t byte = static_cast<std::uint8_t>(mantissa >> (8 * i));
      if (byte == 0) continue;
      if (shift + i >= 32) throw std::domain_error("compact target: overflow");
      target[shift + i] = byte;
    }
  }
  return target;
}

// hash <= target, both read as 256-bit little-endian integers.
inline bool pow_check(const BlockHeader& header) {
  const Hash256 h = header_hash(header);
  const auto target = expand_compact_target(header.bits);
  for (std::size_t i = 32; i-- > 0;) {
    if (h[i] < target[i]) return true;
    if (h[i] > target[i]) return false;
  }
  return true;
}

struct TxInput {
  Hash256 prev_txid{};
  std::uint32_t vout = 0;

  bool is_coinbase_marker() const {
    for (auto b : prev_txid)
      if (b != 0) return false;
    return true;
  }

  bool operator==(const TxInput&) const = default;
};

struct TxOutput {
  std::uint64_t value = 0;  // satoshis
  Hash160 address_hash160{};

  bool operator==(const TxOutput&) const = default;
};

// Canonical transaction layout:
//   u32le input count
//   per input:  32-byte prev txid, u32le vout
//   u32le output count
//   per output: u64le value, u8 payload length (= 20), 20-byte hash160
struct Transaction {
  std::vector<TxInput> inputs;
  std::vector<TxOutput> outputs;

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(serialized_size());
    le::put_u32(out, static_cast<std::uint32_t>(inputs.size()));
    for (const auto& in : inputs) {
      out.insert(out.end(), in.prev_txid.begin(), in.prev_txid.end());
      le::put_u32(out, in.vout);
    }
    le::put_u32(out, static_cast<std::uint32_t>(outputs.size()));
    for (const auto& o : outputs) {
      le::put_u64(out, o.value);
      out.push_back(20);
      out.insert(out.end(), o.address_hash160.begin(), o.address_hash160.end());
    }
    return out;
  }

  std::size_t serialized_size() const {
    return 4 + inputs.size() * 36 + 4 + outputs.size() * 29;
  }

  static Transaction deserialize(std::span<const std::uint8_t> in) {
    Transaction tx;
    std::size_t at = 0;
    auto need = [&](std::size_t n) {
      if (at + n > in.size()) throw std::invalid_argument("transaction: truncated");
    };
    need(4);
    std::uint32_t n_in = le::get_u32(in, at);
    at += 4;
    tx.inputs.resize(n_in);
    for (auto& txin : tx.inputs) {
      need(36);
      std::memcpy(txin.prev_txid.data(), in.data() + at, 32);
      txin.vout = le::get_u32(in, at + 32);
      at += 36;
    }
    need(4);
    std::uint32_t n_out = le::get_u32(in, at);
    at += 4;
    tx.outputs.resize(n_out);
    for (auto& txout : tx.outputs) {
      need(29);
      txout.value = le::get_u64(in, at);
      if (in[at + 8] != 20) throw std::invalid_argument("transaction: bad address length");
      std::memcpy(txout.address_hash160.data(), in.data() + at + 9, 20);
      at += 29;
    }
    if (at != in.size()) throw std::invalid_argument("transaction: trailing bytes");
    return tx;
  }

  bool is_coinbase() const {
    return inputs.size() == 1 && inputs[0].is_coinbase_marker();
  }

  bool operator==(const Transaction&) const = default;
};

inline Hash256 txid(const Transaction& tx) { return dsha256(tx.serialize()); }

struct Block {
  BlockHeader header;
  std::vector<Transaction> txs;
  std::uint32_t height = 0;

  // header || u32le tx count || canonical transactions
  std::size_t serialized_size() const {
    std::size_t n = BlockHeader::kSerializedSize + 4;
    for (const auto& tx : txs) n += tx.serialized_size();
    return n;
  }
};

// Bitcoin Merkle rule: pair adjacent hashes, double-SHA256 the
// concatenation, duplicate the last node at odd levels.
inline Hash256 merkle_root(std::vector<Hash256> level) {
  if (level.empty()) throw std::domain_error("merkle_root: empty txid list");
  while (level.size() > 1) {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Hash256> next(level.size() / 2);
    for (std::size_t i = 0; i < next.size(); ++i) {
      std::array<std::uint8_t, 64> cat{};
      std::memcpy(cat.data(), level[2 * i].data(), 32);
      std::memcpy(cat.data() + 32, level[2 * i + 1].data(), 32);
      next[i] = dsha256(cat);
    }
    level = std::move(next);
  }
  return level[0];
}

inline std::vector<Hash256> block_txids(const Block& block) {
  std::vector<Hash256> ids;
  ids.reserve(block.txs.size());
  for (const auto& tx : block.txs) ids.push_back(txid(tx));
  return ids;
}

struct ChainCheck {
  bool ok = true;
  std::size_t failed_index = 0;
  std::string reason;

  explicit operator bool() const { return ok; }
};

// Every header links to its predecessor and satisfies its own target.
inline ChainCheck validate_header_chain(std::span<const BlockHeader> headers) {
  for (std::size_t i = 0; i < headers.size(); ++i) {
    if (i > 0 && headers[i].prev_hash != header_hash(headers[i - 1]))
      return {false, i, "prev_hash does not match preceding header"};
    if (!pow_check(headers[i])) return {false, i, "proof of work below target"};
  }
  return {};
}

struct SpvCheck {
  bool ok = false;
  std::string reason;

  explicit operator bool() const { return ok; }
};

inline SpvCheck spv_verify(const Transaction& tx, const std::vector<Hash256>& block_txid_list,
                           std::span<const BlockHeader> headers, std::uint32_t height,
                           std::uint32_t min_confirmations) {
  if (height >= headers.size()) return {false, "height beyond header chain"};
  const Hash256 id = txid(tx);
  bool present = false;
  for (const auto& h : block_txid_list)
    if (h == id) {
      present = true;
      break;
    }
  if (!present) return {false, "txid not in block txid list"};
  if (merkle_root(block_txid_list) != headers[height].merkle_root)
    return {false, "merkle root mismatch"};
  const std::uint32_t confirmations = static_cast<std::uint32_t>(headers.size()) - 1 - height;
  if (confirmations < min_confirmations) return {false, "insufficient confirmations"};
  return {true, ""};
}

// --- chain interchange: one JSON object per line per block ---

inline nlohmann::json block_to_json(const Block& block) {
  nlohmann::json jtxs = nlohmann::json::array();
  for (const auto& tx : block.txs) {
    nlohmann::json jin = nlohmann::json::array();
    for (const auto& in : tx.inputs)
      jin.push_back({{"txid", to_hex(in.prev_txid)}, {"vout", in.vout}});
    nlohmann::json jout = nlohmann::json::array();
    for (const auto& out : tx.outputs)
      jout.push_back({{"value", out.value},
                      {"address", base58check_encode(0x00, out.address_hash160)}});
    jtxs.push_back({{"inputs", jin}, {"outputs", jout}});
  }
  return {{"height", block.height},
          {"header",
           {{"version", block.header.version},
            {"prev_hash", to_hex(block.header.prev_hash)},
            {"merkle_root", to_hex(block.header.merkle_root)},
            {"time", block.header.time},
            {"bits", to_hex(std::array<std::uint8_t, 4>{
                         static_cast<std::uint8_t>(block.header.bits >> 24),
                         static_cast<std::uint8_t>(block.header.bits >> 16),
                         static_cast<std::uint8_t>(block.header.bits >> 8),
                         static_cast<std::uint8_t>(block.header.bits)})},
            {"nonce", block.header.nonce}}},
          {"txs", jtxs}};
}

inline Block block_from_json(const nlohmann::json& j) {
  Block b;
  b.height = j.at("height").get<std::uint32_t>();
  const auto& jh = j.at("header");
  b.header.version = jh.at("version").get<std::uint32_t>();
  b.header.prev_hash = from_hex_fixed<32>(jh.at("prev_hash").get<std::string>());
  b.header.merkle_root = from_hex_fixed<32>(jh.at("merkle_root").get<std::string>());
  b.header.time = jh.at("time").get<std::uint32_t>();
  auto bits_bytes = from_hex_fixed<4>(jh.at("bits").get<std::string>());
  b.header.bits = (static_cast<std::uint32_t>(bits_bytes[0]) << 24) |
                  (static_cast<std::uint32_t>(bits_bytes[1]) << 16) |
                  (static_cast<std::uint32_t>(bits_bytes[2]) << 8) | bits_bytes[3];
  b.header.nonce = jh.at("nonce").get<std::uint32_t>();
  for (const auto& jtx : j.at("txs")) {
    Transaction tx;
    for (const auto& jin : jtx.at("inputs")) {
      TxInput in;
      in.prev_txid = from_hex_fixed<32>(jin.at("txid").get<std::string>());
      in.vout = jin.at("vout").get<std::uint32_t>();
      tx.inputs.push_back(in);
    }
    for (const auto& jout : jtx.at("outputs")) {
      TxOutput out;
      out.value = jout.at("value").get<std::uint64_t>();
      auto dec = base58check_decode(jout.at("address").get<std::string>());
      if (!dec || dec->version != 0x00 || dec->payload.size() != 20)
        throw std::invalid_argument("chain json: bad address");
      std::copy(dec->payload.begin(), dec->payload.end(), out.address_hash160.begin());
      tx.outputs.push_back(out);
    }
    b.txs.push_back(std::move(tx));
  }
  return b;
}

inline void write_chain_jsonl(std::ostream& os, std::span<const Block> blocks) {
  for (const auto& b : blocks) os << block_to_json(b).dump() << '\n';
}

inline std::vector<Block> read_chain_jsonl(std::istream& is) {
  std::vector<Block> blocks;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    blocks.push_back(block_from_json(nlohmann::json::parse(line)));
  }
  return blocks;
}

inline std::vector<Block> read_chain_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open chain file: " + path);
  return read_chain_jsonl(is);
}

}  // namespace pirspv
