#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pirspv/base58.hpp"
#include "pirspv/chain.hpp"
#include "pirspv/manifest.hpp"
#include "pirspv/pirdb.hpp"

namespace pirspv {

inline constexpr std::uint32_t kWeeklyBlocks = 1008;
inline constexpr std::uint32_t kMonthlyBlocks = 4032;

// Tip-anchored temporal split: the newest 1008 blocks are weekly, the
// preceding 4032 monthly, everything older all-time.
struct PeriodPartition {
  // [0, alltime_end) all-time, [alltime_end, monthly_end) monthly,
  // [monthly_end, n) weekly. Index == block height.
  std::size_t alltime_end = 0;
  std::size_t monthly_end = 0;
  std::size_t n_blocks = 0;

  std::pair<std::size_t, std::size_t> range(DbPeriod p) const {
    switch (p) {
      case DbPeriod::Weekly: return {monthly_end, n_blocks};
      case DbPeriod::Monthly: return {alltime_end, monthly_end};
      case DbPeriod::AllTime: return {0, alltime_end};
    }
    throw std::domain_error("unknown period");
  }

  DbPeriod period_of(std::uint32_t height) const {
    if (height >= monthly_end) return DbPeriod::Weekly;
    if (height >= alltime_end) return DbPeriod::Monthly;
    return DbPeriod::AllTime;
  }
};

inline PeriodPartition partition_chain(std::span<const Block> blocks) {
  if (blocks.empty()) throw std::domain_error("partition: empty chain");
  PeriodPartition part;
  part.n_blocks = blocks.size();
  const std::size_t weekly = std::min<std::size_t>(kWeeklyBlocks, blocks.size());
  const std::size_t monthly = std::min<std::size_t>(kMonthlyBlocks, blocks.size() - weekly);
  part.monthly_end = blocks.size() - weekly;
  part.alltime_end = part.monthly_end - monthly;
  return part;
}

// 62-byte address database entry: base58check-decoded address payload,
// txid, big-endian block height, vout.
struct AddressEntry {
  std::array<std::uint8_t, 25> address_payload{};
  Hash256 txid{};
  std::uint32_t block_height = 0;
  std::uint8_t vout = 0;

  static constexpr std::size_t kSize = 62;

  std::array<std::uint8_t, kSize> pack() const {
    std::array<std::uint8_t, kSize> out{};
    std::copy(address_payload.begin(), address_payload.end(), out.begin());
    std::copy(txid.begin(), txid.end(), out.begin() + 25);
    for (int i = 0; i < 4; ++i)
      out[57 + i] = static_cast<std::uint8_t>(block_height >> (8 * (3 - i)));
    out[61] = vout;
    return out;
  }

  static AddressEntry unpack(std::span<const std::uint8_t> in) {
    if (in.size() < kSize) throw std::invalid_argument("address entry: short buffer");
    AddressEntry e;
    std::copy(in.begin(), in.begin() + 25, e.address_payload.begin());
    std::copy(in.begin() + 25, in.begin() + 57, e.txid.begin());
    e.block_height = 0;
    for (int i = 0; i < 4; ++i)
      e.block_height = (e.block_height << 8) | in[57 + i];
    e.vout = in[61];
    return e;
  }

  std::string address_base58() const {
    return base58check_encode(address_payload[0],
                              std::span<const std::uint8_t>(address_payload.data() + 1, 20));
  }

  bool operator==(const AddressEntry&) const = default;
};

inline std::array<std::uint8_t, 25> address_payload_from_hash160(const Hash160& h) {
  std::array<std::uint8_t, 25> out{};
  out[0] = 0x00;
  std::copy(h.begin(), h.end(), out.begin() + 1);
  std::vector<std::uint8_t> body(out.begin(), out.begin() + 21);
  Hash256 check = dsha256(body);
  std::copy(check.begin(), check.begin() + 4, out.begin() + 21);
  return out;
}

// Unspent-at-tip outputs keyed by (txid, vout).
struct UtxoSnapshot {
  struct Out {
    Hash160 address;
    std::uint32_t height;
    std::uint64_t value;
  };
  std::map<std::pair<Hash256, std::uint32_t>, Out> live;
};

inline UtxoSnapshot scan_utxo(std::span<const Block> blocks) {
  UtxoSnapshot snap;
  for (const auto& block : blocks) {
    for (const auto& tx : block.txs) {
      if (!tx.is_coinbase())
        for (const auto& in : tx.inputs) snap.live.erase({in.prev_txid, in.vout});
      const Hash256 id = txid(tx);
      for (std::size_t i = 0; i < tx.outputs.size(); ++i) {
        if (i > 255) throw BuildError("build: vout index exceeds the one-byte field");
        snap.live[{id, static_cast<std::uint32_t>(i)}] =
            {tx.outputs[i].address_hash160, block.height, tx.outputs[i].value};
      }
    }
  }
  return snap;
}

// One entry per unspent output created inside the period, ordered so that
// an address's entries are contiguous and ascend by height.
inline std::vector<AddressEntry> extract_address_entries(const UtxoSnapshot& utxo,
                                                         std::size_t height_begin,
                                                         std::size_t height_end) {
  std::vector<AddressEntry> entries;
  for (const auto& [key, out] : utxo.live) {
    if (out.height < height_begin || out.height >= height_end) continue;
    AddressEntry e;
    e.address_payload = address_payload_from_hash160(out.address);
    e.txid = key.first;
    e.block_height = out.height;
    e.vout = static_cast<std::uint8_t>(key.second);
    entries.push_back(e);
  }
  std::sort(entries.begin(), entries.end(), [](const AddressEntry& a, const AddressEntry& b) {
    if (a.address_payload != b.address_payload) return a.address_payload < b.address_payload;
    if (a.block_height != b.block_height) return a.block_height < b.block_height;
    if (a.txid != b.txid) return a.txid < b.txid;
    return a.vout < b.vout;
  });
  return entries;
}

struct DbDims {
  std::uint32_t entries_per_row = 0;
  std::uint32_t row_width_bytes = 0;
  std::uint32_t num_rows = 0;
  std::uint8_t item_unit = 1;
};

struct ItemStats {
  std::uint64_t total_item_bytes = 0;  // transaction databases
  std::uint64_t n_blocks = 0;          // all-time Merkle running average
};

// Address databases and weekly/monthly Merkle databases are byte-square:
// entries_per_row = ceil(sqrt(n / unit)) so that row width in bytes equals
// the row count. The all-time Merkle width is the running average of
// per-block txid counts; transaction widths are the mean transaction
// length, with the height covering the total byte volume.
inline DbDims compute_dimensions(DbKind kind, DbPeriod period, std::uint64_t n_items,
                                 const ItemStats& stats) {
  if (n_items == 0) throw std::domain_error("dimensions: need at least one item");
  DbDims dims;
  dims.item_unit = kind_item_unit(kind);

  const bool square = kind == DbKind::Address ||
                      (kind == DbKind::MerkleTree && period != DbPeriod::AllTime);
  if (square) {
    const std::uint64_t unit = dims.item_unit;
    std::uint64_t e = static_cast<std::uint64_t>(
        std::ceil(std::sqrt(static_cast<double>(n_items) / static_cast<double>(unit))));
    if (e == 0) e = 1;
    while (e * e * unit < n_items) ++e;  // guard against sqrt rounding down
    dims.entries_per_row = static_cast<std::uint32_t>(e);
    dims.row_width_bytes = static_cast<std::uint32_t>(e * unit);
    dims.num_rows = dims.row_width_bytes;
    return dims;
  }

  if (kind == DbKind::MerkleTree) {
    if (stats.n_blocks == 0) throw std::domain_error("dimensions: merkle stats need block count");
    const std::uint64_t width = (n_items + stats.n_blocks - 1) / stats.n_blocks;
    dims.entries_per_row = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, width));
    dims.row_width_bytes = dims.entries_per_row * 32u;
    dims.num_rows =
        static_cast<std::uint32_t>((n_items + dims.entries_per_row - 1) / dims.entries_per_row);
    return dims;
  }

  // Transaction database: width is the expected transaction length.
  if (stats.total_item_bytes == 0)
    throw std::domain_error("dimensions: transaction stats need byte volume");
  const std::uint64_t width = (stats.total_item_bytes + n_items - 1) / n_items;
  dims.entries_per_row = static_cast<std::uint32_t>(width);
  dims.row_width_bytes = static_cast<std::uint32_t>(width);
  dims.num_rows = static_cast<std::uint32_t>((stats.total_item_bytes + width - 1) / width);
  return dims;
}

struct PackedItem {
  std::string key;
  std::vector<std::uint8_t> bytes;  // multiple of the kind's item unit
};

struct BuiltDatabase {
  PirDatabase db;
  Manifest manifest;
};

// Items are packed left to right, top to bottom, in the order given;
// remaining space stays zero. Each key's occupied range is recorded in
// item units as a reading-order rectangle.
inline BuiltDatabase build_database(DbKind kind, DbPeriod period,
                                    std::span<const PackedItem> items, const DbDims& dims) {
  BuiltDatabase out;
  out.db.kind = kind;
  out.db.period = period;
  out.db.num_rows = dims.num_rows;
  out.db.row_width = dims.row_width_bytes;
  out.db.item_unit = dims.item_unit;
  out.db.payload.assign(static_cast<std::size_t>(dims.num_rows) * dims.row_width_bytes, 0);
  out.manifest.kind = kind;
  out.manifest.period = period;

  const std::uint32_t unit = dims.item_unit;
  const std::uint32_t epr = dims.entries_per_row;
  const std::uint64_t capacity_units = static_cast<std::uint64_t>(epr) * dims.num_rows;

  std::uint64_t cursor = 0;  // in item units
  for (const auto& item : items) {
    if (item.bytes.empty() || item.bytes.size() % unit != 0)
      throw BuildError("build: item size is not a multiple of the unit");
    const std::uint64_t n_units = item.bytes.size() / unit;
    if (cursor + n_units > capacity_units)
      throw BuildError("build: database capacity exceeded, dimensions must be recomputed");

    const std::uint64_t start = cursor;
    const std::uint64_t end = cursor + n_units - 1;
    ManifestRecord rec;
    rec.row_start = static_cast<std::uint32_t>(start / epr);
    rec.row_end = static_cast<std::uint32_t>(end / epr);
    rec.col_start = static_cast<std::uint32_t>(start % epr);
    rec.col_end = static_cast<std::uint32_t>(end % epr);
    out.manifest.insert(item.key, rec);

    for (std::uint64_t u = 0; u < n_units; ++u) {
      const std::uint64_t slot = cursor + u;
      const std::uint64_t row = slot / epr;
      const std::uint64_t col = slot % epr;
      std::copy(item.bytes.begin() + static_cast<std::ptrdiff_t>(u * unit),
                item.bytes.begin() + static_cast<std::ptrdiff_t>((u + 1) * unit),
                out.db.payload.begin() +
                    static_cast<std::ptrdiff_t>(row * dims.row_width_bytes + col * unit));
    }
    cursor += n_units;
  }
  return out;
}

struct BuildOutput {
  std::vector<BlockHeader> headers;
  PeriodPartition partition;
  std::map<std::pair<DbKind, DbPeriod>, BuiltDatabase> databases;

  const BuiltDatabase& at(DbKind k, DbPeriod p) const { return databases.at({k, p}); }
};

namespace builddetail {

// Placeholder databases keep the full 3x3 grid present when a period holds
// no data; their manifests are empty so every lookup misses.
inline BuiltDatabase empty_database(DbKind kind, DbPeriod period) {
  DbDims dims;
  dims.item_unit = kind_item_unit(kind);
  dims.entries_per_row = 1;
  dims.row_width_bytes = dims.item_unit;
  dims.num_rows = 1;
  return build_database(kind, period, {}, dims);
}

inline std::string height_key(std::uint32_t height) { return std::to_string(height); }

}  // namespace builddetail

// Deterministic end-to-end build: same blocks in, byte-identical databases
// and manifests out.
inline BuildOutput build_all(std::span<const Block> blocks) {
  BuildOutput out;
  out.partition = partition_chain(blocks);
  for (const auto& b : blocks) out.headers.push_back(b.header);

  const UtxoSnapshot utxo = scan_utxo(blocks);

  for (DbPeriod period : kAllPeriods) {
    const auto [begin, end] = out.partition.range(period);

    // Address database: contiguous run of 62-byte entries per address.
    {
      auto entries = extract_address_entries(utxo, begin, end);
      if (entries.empty()) {
        out.databases[{DbKind::Address, period}] =
            builddetail::empty_database(DbKind::Address, period);
      } else {
        std::vector<PackedItem> items;
        for (const auto& e : entries) {
          std::string key = e.address_base58();
          auto packed = e.pack();
          if (!items.empty() && items.back().key == key)
            items.back().bytes.insert(items.back().bytes.end(), packed.begin(), packed.end());
          else
            items.push_back({std::move(key), {packed.begin(), packed.end()}});
        }
        auto dims = compute_dimensions(DbKind::Address, period, entries.size(), {});
        out.databases[{DbKind::Address, period}] =
            build_database(DbKind::Address, period, items, dims);
      }
    }

    // Merkle database: every block's txids in block order, ascending heights.
    {
      std::vector<PackedItem> items;
      std::uint64_t total_txids = 0;
      for (std::size_t h = begin; h < end; ++h) {
        PackedItem item;
        item.key = builddetail::height_key(blocks[h].height);
        for (const auto& tx : blocks[h].txs) {
          const Hash256 id = txid(tx);
          item.bytes.insert(item.bytes.end(), id.begin(), id.end());
          ++total_txids;
        }
        items.push_back(std::move(item));
      }
      if (items.empty()) {
        out.databases[{DbKind::MerkleTree, period}] =
            builddetail::empty_database(DbKind::MerkleTree, period);
      } else {
        ItemStats stats;
        stats.n_blocks = end - begin;
        auto dims = compute_dimensions(DbKind::MerkleTree, period, total_txids, stats);
        out.databases[{DbKind::MerkleTree, period}] =
            build_database(DbKind::MerkleTree, period, items, dims);
      }
    }

    // Transaction database: serialized bytes of every transaction that
    // still has an unspent output, keyed by txid hex.
    {
      std::vector<PackedItem> items;
      std::uint64_t total_bytes = 0;
      for (std::size_t h = begin; h < end; ++h) {
        for (const auto& tx : blocks[h].txs) {
          const Hash256 id = txid(tx);
          bool live = false;
          for (std::size_t i = 0; i < tx.outputs.size() && !live; ++i)
            live = utxo.live.count({id, static_cast<std::uint32_t>(i)}) > 0;
          if (!live) continue;
          PackedItem item;
          item.key = to_hex(id);
          item.bytes = tx.serialize();
          total_bytes += item.bytes.size();
          items.push_back(std::move(item));
        }
      }
      if (items.empty()) {
        out.databases[{DbKind::Transaction, period}] =
            builddetail::empty_database(DbKind::Transaction, period);
      } else {
        ItemStats stats;
        stats.total_item_bytes = total_bytes;
        auto dims = compute_dimensions(DbKind::Transaction, period, items.size(), stats);
        out.databases[{DbKind::Transaction, period}] =
            build_database(DbKind::Transaction, period, items, dims);
      }
    }
  }
  return out;
}

inline void write_build_dir(const std::string& dir, const BuildOutput& build) {
  std::filesystem::create_directories(dir);
  for (const auto& [key, built] : build.databases) {
    write_pirdb_file(dir + "/" + db_filename(key.first, key.second), built.db);
    std::ofstream mf(dir + "/" + manifest_filename(key.first, key.second));
    if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
    mf << manifest_to_json(built.manifest);
  }
  std::ofstream hf(dir + "/headers.bin", std::ios::binary);
  if (!hf) throw std::runtime_error("cannot write headers.bin in " + dir);
  for (const auto& h : build.headers) {
    auto bytes = h.serialize();
    hf.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  }
}

}  // namespace pirspv
