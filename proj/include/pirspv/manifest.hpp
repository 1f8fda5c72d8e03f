#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirspv/pirdb.hpp"

namespace pirspv {

struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reading-order rectangle of one keyed item inside a database. Column
// units are item indices for address and Merkle databases, byte offsets
// for transaction databases.
struct ManifestRecord {
  std::uint32_t row_start = 0;
  std::uint32_t row_end = 0;
  std::uint32_t col_start = 0;
  std::uint32_t col_end = 0;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  DbKind kind = DbKind::Address;
  DbPeriod period = DbPeriod::Weekly;
  std::map<std::string, ManifestRecord> records;

  std::optional<ManifestRecord> lookup(const std::string& key) const {
    auto it = records.find(key);
    if (it == records.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& key, const ManifestRecord& rec) {
    if (!records.emplace(key, rec).second)
      throw BuildError("manifest: duplicate key " + key);
  }
};

// One JSON object per manifest, key -> [row_start, row_end, col_start,
// col_end]. std::map keeps keys sorted, which makes the bytes
// deterministic across builders.
inline std::string manifest_to_json(const Manifest& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, rec] : m.records)
    j[key] = {rec.row_start, rec.row_end, rec.col_start, rec.col_end};
  return j.dump();
}

inline Manifest manifest_from_json(const std::string& text, DbKind kind, DbPeriod period) {
  Manifest m;
  m.kind = kind;
  m.period = period;
  nlohmann::json j = nlohmann::json::parse(text);  // throws on malformed input
  if (!j.is_object()) throw nlohmann::json::parse_error::create(101, 0, "manifest: not an object", nullptr);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& arr = it.value();
    if (!arr.is_array() || arr.size() != 4)
      throw std::invalid_argument("manifest: record must be a 4-element array");
    ManifestRecord rec{arr[0].get<std::uint32_t>(), arr[1].get<std::uint32_t>(),
                       arr[2].get<std::uint32_t>(), arr[3].get<std::uint32_t>()};
    if (rec.row_start > rec.row_end ||
        (rec.row_start == rec.row_end && rec.col_start > rec.col_end))
      throw std::invalid_argument("manifest: rectangle is inverted");
    m.insert(it.key(), rec);
  }
  return m;
}

inline std::string manifest_filename(DbKind k, DbPeriod p) {
  return std::string(kind_name(k)) + "-" + period_name(p) + ".manifest.json";
}

}  // namespace pirspv
