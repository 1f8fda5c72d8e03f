#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pirspv {

enum class DbKind : std::uint8_t { Address = 0, MerkleTree = 1, Transaction = 2 };
enum class DbPeriod : std::uint8_t { Weekly = 0, Monthly = 1, AllTime = 2 };

inline constexpr DbKind kAllKinds[] = {DbKind::Address, DbKind::MerkleTree, DbKind::Transaction};
inline constexpr DbPeriod kAllPeriods[] = {DbPeriod::Weekly, DbPeriod::Monthly, DbPeriod::AllTime};

inline const char* kind_name(DbKind k) {
  switch (k) {
    case DbKind::Address: return "address";
    case DbKind::MerkleTree: return "merkle";
    case DbKind::Transaction: return "transaction";
  }
  throw std::domain_error("unknown database kind");
}

inline const char* period_name(DbPeriod p) {
  switch (p) {
    case DbPeriod::Weekly: return "weekly";
    case DbPeriod::Monthly: return "monthly";
    case DbPeriod::AllTime: return "alltime";
  }
  throw std::domain_error("unknown database period");
}

// Bytes an item occupies in each database kind: 62-byte address entries,
// 32-byte txids, raw transaction bytes.
inline std::uint8_t kind_item_unit(DbKind k) {
  switch (k) {
    case DbKind::Address: return 62;
    case DbKind::MerkleTree: return 32;
    case DbKind::Transaction: return 1;
  }
  throw std::domain_error("unknown database kind");
}

// Immutable byte matrix all PIR backends operate on.
struct PirDatabase {
  DbKind kind = DbKind::Address;
  DbPeriod period = DbPeriod::Weekly;
  std::uint32_t num_rows = 0;
  std::uint32_t row_width = 0;  // bytes
  std::uint8_t item_unit = 1;
  std::vector<std::uint8_t> payload;  // num_rows * row_width, row-major

  void check() const {
    if (num_rows == 0 || row_width == 0)
      throw std::domain_error("pir database: dimensions must be positive");
    if (payload.size() != static_cast<std::size_t>(num_rows) * row_width)
      throw std::domain_error("pir database: payload size does not match dimensions");
  }

  std::span<const std::uint8_t> row(std::uint32_t r) const {
    return {payload.data() + static_cast<std::size_t>(r) * row_width, row_width};
  }
};

inline constexpr char kPirDbMagic[6] = {'P', 'I', 'R', 'D', 'B', '\x01'};

// On-disk layout: magic, u8 kind, u8 period, u32le row_width, u32le
// num_rows, u8 item_unit, payload.
inline void write_pirdb(std::ostream& os, const PirDatabase& db) {
  db.check();
  os.write(kPirDbMagic, sizeof(kPirDbMagic));
  auto put_u8 = [&](std::uint8_t v) { os.put(static_cast<char>(v)); };
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>(v >> (8 * i)));
  };
  put_u8(static_cast<std::uint8_t>(db.kind));
  put_u8(static_cast<std::uint8_t>(db.period));
  put_u32(db.row_width);
  put_u32(db.num_rows);
  put_u8(db.item_unit);
  os.write(reinterpret_cast<const char*>(db.payload.data()),
           static_cast<std::streamsize>(db.payload.size()));
  if (!os) throw std::runtime_error("pir database: write failed");
}

inline PirDatabase read_pirdb(std::istream& is) {
  char magic[6];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kPirDbMagic, sizeof(magic)) != 0)
    throw std::runtime_error("pir database: bad magic");
  auto get_u8 = [&]() { return static_cast<std::uint8_t>(is.get()); };
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8()) << (8 * i);
    return v;
  };
  PirDatabase db;
  db.kind = static_cast<DbKind>(get_u8());
  db.period = static_cast<DbPeriod>(get_u8());
  db.row_width = get_u32();
  db.num_rows = get_u32();
  db.item_unit = get_u8();
  db.payload.resize(static_cast<std::size_t>(db.num_rows) * db.row_width);
  is.read(reinterpret_cast<char*>(db.payload.data()),
          static_cast<std::streamsize>(db.payload.size()));
  if (!is) throw std::runtime_error("pir database: truncated payload");
  db.check();
  return db;
}

inline std::string db_filename(DbKind k, DbPeriod p) {
  return std::string(kind_name(k)) + "-" + period_name(p) + ".pirdb";
}

inline void write_pirdb_file(const std::string& path, const PirDatabase& db) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  write_pirdb(os, db);
}

inline PirDatabase read_pirdb_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for read: " + path);
  return read_pirdb(is);
}

}  // namespace pirspv
