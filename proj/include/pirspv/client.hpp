#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pirspv/channel.hpp"
#include "pirspv/chain.hpp"
#include "pirspv/cpir.hpp"
#include "pirspv/db_build.hpp"
#include "pirspv/itpir.hpp"
#include "pirspv/manifest.hpp"
#include "pirspv/rng.hpp"
#include "pirspv/wire.hpp"

namespace pirspv {

enum class Backend { ItPir, CPir, Naive };

inline Backend backend_from_name(const std::string& name) {
  if (name == "itpir") return Backend::ItPir;
  if (name == "cpir") return Backend::CPir;
  if (name == "naive") return Backend::Naive;
  throw std::invalid_argument("unknown backend: " + name);
}

struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Client-side byte accounting, split so benchmarks can include or exclude
// each traffic class. Header sync, manifest and meta fetches are setup
// traffic; query/response payloads plus their framing are the protocol
// cost proper.
struct ByteCounters {
  std::uint64_t headers = 0;
  std::uint64_t manifests = 0;
  std::uint64_t meta = 0;
  std::uint64_t pir_query = 0;     // query blobs sent
  std::uint64_t pir_response = 0;  // response blobs received
  std::uint64_t full_db = 0;       // trivial-download payloads
  std::uint64_t pir_overhead = 0;  // frame + routing bytes on the query path
  std::uint64_t setup_overhead = 0;
  std::uint64_t wire_sent = 0;     // raw framed bytes, all traffic
  std::uint64_t wire_received = 0;

  std::uint64_t protocol_payload() const { return pir_query + pir_response + full_db; }
  std::uint64_t protocol_total() const { return protocol_payload() + pir_overhead; }
};

struct ClientConfig {
  Backend backend = Backend::ItPir;
  std::uint32_t t = 1;
  std::uint32_t v = 0;
  std::uint32_t cpir_modulus_bits = 1024;
  std::uint64_t seed = 0;  // 0 draws from system entropy
  std::uint32_t min_confirmations = 6;
};

struct LocatedEntry {
  AddressEntry entry;
  DbPeriod period = DbPeriod::Weekly;
};

struct RoundCost {
  std::uint64_t bytes = 0;
  double seconds = 0.0;
};

struct SpvResult {
  std::string address;
  Hash256 txid{};
  std::uint32_t block_height = 0;
  DbPeriod period = DbPeriod::Weekly;
  std::vector<std::uint8_t> tx_bytes;
  std::vector<Hash256> block_txids;
  bool verified = false;
  std::string failure_reason;
  RoundCost round_address;  // shared across entries surfaced by one fetch
  RoundCost round_merkle;
  RoundCost round_transaction;

  std::uint64_t bandwidth_bytes() const {
    return round_address.bytes + round_merkle.bytes + round_transaction.bytes;
  }
  double latency_seconds() const {
    return round_address.seconds + round_merkle.seconds + round_transaction.seconds;
  }
};

// One protocol session against a fixed set of servers. IT-PIR needs at
// least t+1 reachable servers (t+2v+1 when correcting Byzantine
// responses); C-PIR and the trivial backend use exactly one.
class ClientSession {
 public:
  ClientSession(std::vector<std::unique_ptr<Channel>> channels, const ClientConfig& cfg)
      : cfg_(cfg),
        rng_(cfg.seed == 0 ? Rng::from_entropy() : Rng(cfg.seed)) {
    if (channels.empty()) throw std::invalid_argument("client: need at least one server");
    for (auto& ch : channels) endpoints_.push_back({std::move(ch), 0, 0, true});
    handshake();
  }

  const PirParams& params() const { return params_; }
  ByteCounters& counters() { return counters_; }
  const ByteCounters& counters() const { return counters_; }
  const std::vector<BlockHeader>& headers() const { return headers_; }
  std::uint32_t min_confirmations() const { return cfg_.min_confirmations; }

  // Applied to reassembled transaction bytes before parsing; lets tests
  // exercise the digest integrity check.
  std::function<void(std::vector<std::uint8_t>&)> tx_fetch_tamper;

  void sync_headers() {
    std::vector<std::uint8_t> req(4, 0);  // from_height = 0
    Frame resp = request_any(MsgType::GetHeaders, req, Category::Headers);
    if (resp.payload.size() % BlockHeader::kSerializedSize != 0)
      throw ProtocolError("headers: response not a multiple of 80 bytes");
    headers_.clear();
    for (std::size_t off = 0; off < resp.payload.size(); off += BlockHeader::kSerializedSize)
      headers_.push_back(BlockHeader::deserialize(
          std::span<const std::uint8_t>(resp.payload.data() + off, BlockHeader::kSerializedSize)));
    auto check = validate_header_chain(headers_);
    if (!check)
      throw ProtocolError("headers: invalid chain at height " +
                          std::to_string(check.failed_index) + ": " + check.reason);
  }

  void fetch_manifests() {
    for (DbKind k : kAllKinds) {
      for (DbPeriod p : kAllPeriods) {
        Frame resp = request_any(MsgType::GetManifest, route_payload(k, p), Category::Manifest);
        manifests_[{k, p}] =
            manifest_from_json(std::string(resp.payload.begin(), resp.payload.end()), k, p);
      }
    }
  }

  const Manifest& manifest(DbKind k, DbPeriod p) const { return manifests_.at({k, p}); }

  DbMeta meta(DbKind k, DbPeriod p) {
    auto it = metas_.find({k, p});
    if (it != metas_.end()) return it->second;
    Frame resp = request_any(MsgType::GetDbMeta, route_payload(k, p), Category::Meta);
    DbMeta m = DbMeta::decode(resp.payload);
    metas_[{k, p}] = m;
    return m;
  }

  // Fetches rows [row_start, row_end] and returns them concatenated. Every
  // backend goes through here so byte accounting stays uniform.
  std::vector<std::uint8_t> fetch_rows(DbKind kind, DbPeriod period, std::uint32_t row_start,
                                       std::uint32_t row_end) {
    const DbMeta m = meta(kind, period);
    if (row_start > row_end || row_end >= m.num_rows)
      throw std::domain_error("fetch_rows: row range out of bounds");
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(row_end - row_start + 1) * m.row_width);
    for (std::uint32_t r = row_start; r <= row_end; ++r) {
      auto row = fetch_row(kind, period, r, m);
      out.insert(out.end(), row.begin(), row.end());
    }
    return out;
  }

  // Round a: all entries recorded for the address, across every period
  // whose manifest has a hit.
  std::vector<LocatedEntry> query_address(const std::string& address) {
    std::vector<LocatedEntry> entries;
    for (DbPeriod period : kAllPeriods) {
      auto located = query_address_in_period(address, period);
      entries.insert(entries.end(), located.begin(), located.end());
    }
    return entries;
  }

  // Round a restricted to one period; empty when the manifest misses.
  std::vector<LocatedEntry> query_address_in_period(const std::string& address, DbPeriod period) {
    auto rec = manifest(DbKind::Address, period).lookup(address);
    if (!rec) return {};
    return fetch_address_record(address, period, *rec);
  }

  // Round b: the txid list of exactly one block, located by height key.
  std::vector<Hash256> query_merkle(std::uint32_t height) {
    auto [period, rec] = locate(DbKind::MerkleTree, std::to_string(height));
    auto bytes = fetch_rectangle(DbKind::MerkleTree, period, rec);
    if (bytes.size() % 32 != 0) throw ProtocolError("merkle: rectangle not txid aligned");
    std::vector<Hash256> ids(bytes.size() / 32);
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(i * 32),
                bytes.begin() + static_cast<std::ptrdiff_t>((i + 1) * 32), ids[i].begin());
    return ids;
  }

  // Round c: transaction bytes, digest-checked against the requested txid.
  std::pair<Transaction, std::vector<std::uint8_t>> query_transaction(const Hash256& id) {
    auto [period, rec] = locate(DbKind::Transaction, to_hex(id));
    auto bytes = fetch_rectangle(DbKind::Transaction, period, rec);
    if (tx_fetch_tamper) tx_fetch_tamper(bytes);
    Transaction tx;
    try {
      tx = Transaction::deserialize(bytes);
    } catch (const std::exception& e) {
      throw IntegrityError(std::string("transaction bytes do not parse: ") + e.what());
    }
    if (txid(tx) != id)
      throw IntegrityError("fetched transaction digest mismatch");
    return {std::move(tx), std::move(bytes)};
  }

  // Full protocol for one address: rounds a -> b -> c per entry, then SPV
  // verification. Per-entry failures are recorded, not propagated.
  std::vector<SpvResult> pir_spv(const std::string& address, std::uint32_t min_confirmations) {
    std::vector<SpvResult> results;
    for (DbPeriod period : kAllPeriods) {
      auto rec = manifest(DbKind::Address, period).lookup(address);
      if (!rec) continue;

      const auto before = snapshot();
      const auto t0 = std::chrono::steady_clock::now();
      auto located = fetch_address_record(address, period, *rec);
      RoundCost round_a = cost_since(before, t0);

      for (const auto& le : located) {
        SpvResult result = verify_entry(le, min_confirmations);
        result.address = address;
        result.round_address = round_a;
        results.push_back(std::move(result));
      }
    }
    return results;
  }

  // Rounds b and c plus verification for one already-located entry.
  SpvResult verify_entry(const LocatedEntry& le, std::uint32_t min_confirmations) {
    SpvResult result;
    result.address = le.entry.address_base58();
    result.txid = le.entry.txid;
    result.block_height = le.entry.block_height;
    result.period = le.period;
    try {
      {
        const auto before = snapshot();
        const auto t0 = std::chrono::steady_clock::now();
        result.block_txids = query_merkle(le.entry.block_height);
        result.round_merkle = cost_since(before, t0);
      }
      {
        const auto before = snapshot();
        const auto t0 = std::chrono::steady_clock::now();
        auto [tx, bytes] = query_transaction(le.entry.txid);
        result.round_transaction = cost_since(before, t0);
        result.tx_bytes = std::move(bytes);
        auto check = spv_verify(tx, result.block_txids, headers_, le.entry.block_height,
                                min_confirmations);
        result.verified = check.ok;
        result.failure_reason = check.reason;
      }
    } catch (const std::exception& e) {
      result.verified = false;
      result.failure_reason = e.what();
    }
    return result;
  }

  std::size_t alive_endpoints() const {
    std::size_t n = 0;
    for (const auto& ep : endpoints_)
      if (ep.alive) ++n;
    return n;
  }

 private:
  struct Endpoint {
    std::unique_ptr<Channel> channel;
    std::uint8_t server_index;
    gf::Elem alpha;
    bool alive;
  };

  enum class Category { Headers, Manifest, Meta, Pir, FullDb };

  static std::vector<std::uint8_t> route_payload(DbKind k, DbPeriod p) {
    return {static_cast<std::uint8_t>(k), static_cast<std::uint8_t>(p)};
  }

  struct CounterSnapshot {
    std::uint64_t protocol_total;
  };

  CounterSnapshot snapshot() const { return {counters_.protocol_total()}; }

  RoundCost cost_since(const CounterSnapshot& before,
                       std::chrono::steady_clock::time_point t0) const {
    RoundCost cost;
    cost.bytes = counters_.protocol_total() - before.protocol_total;
    cost.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cost;
  }

  // Learn each server's index and evaluation point, then freeze PirParams.
  void handshake() {
    for (auto& ep : endpoints_) {
      Frame resp = request_endpoint(ep, MsgType::GetDbMeta,
                                    route_payload(DbKind::Address, DbPeriod::Weekly),
                                    Category::Meta);
      DbMeta m = DbMeta::decode(resp.payload);
      ep.server_index = m.server_index;
      ep.alpha = m.alpha;
    }
    params_.ell = static_cast<std::uint32_t>(endpoints_.size());
    params_.t = cfg_.t;
    params_.v = cfg_.v;
    params_.k = params_.ell;
    params_.alphas.clear();
    for (const auto& ep : endpoints_) params_.alphas.push_back(ep.alpha);
    if (cfg_.backend == Backend::ItPir) params_.validate();
    if (cfg_.backend == Backend::CPir && endpoints_.size() != 1)
      throw std::invalid_argument("cpir backend uses exactly one server");
  }

  void account(Category cat, std::size_t request_payload, std::size_t response_payload) {
    counters_.wire_sent += kFrameOverhead + request_payload;
    counters_.wire_received += kFrameOverhead + response_payload;
    switch (cat) {
      case Category::Headers:
        counters_.headers += response_payload;
        counters_.setup_overhead += 2 * kFrameOverhead + request_payload;
        break;
      case Category::Manifest:
        counters_.manifests += response_payload;
        counters_.setup_overhead += 2 * kFrameOverhead + request_payload;
        break;
      case Category::Meta:
        counters_.meta += response_payload;
        counters_.setup_overhead += 2 * kFrameOverhead + request_payload;
        break;
      case Category::Pir:
        counters_.pir_query += request_payload - kPirRouteBytes;
        counters_.pir_response += response_payload;
        counters_.pir_overhead += 2 * kFrameOverhead + kPirRouteBytes;
        break;
      case Category::FullDb:
        counters_.full_db += response_payload;
        counters_.pir_overhead += 2 * kFrameOverhead + request_payload;
        break;
    }
  }

  Frame request_endpoint(Endpoint& ep, MsgType type, std::vector<std::uint8_t> payload,
                         Category cat) {
    Frame request;
    request.type = static_cast<std::uint8_t>(type);
    request.payload = std::move(payload);
    Frame response = ep.channel->roundtrip(request);
    account(cat, request.payload.size(), response.payload.size());
    if (response.type == static_cast<std::uint8_t>(MsgType::Error)) {
      std::string message(response.payload.begin() + (response.payload.empty() ? 0 : 1),
                          response.payload.end());
      throw ProtocolError("server error: " + message);
    }
    return response;
  }

  Frame request_any(MsgType type, const std::vector<std::uint8_t>& payload, Category cat) {
    for (auto& ep : endpoints_) {
      if (!ep.alive) continue;
      try {
        return request_endpoint(ep, type, payload, cat);
      } catch (const ChannelError&) {
        ep.alive = false;
      }
    }
    throw ProtocolError("no reachable server");
  }

  std::vector<std::uint8_t> fetch_row(DbKind kind, DbPeriod period, std::uint32_t row,
                                      const DbMeta& m) {
    switch (cfg_.backend) {
      case Backend::ItPir: return fetch_row_itpir(kind, period, row, m);
      case Backend::CPir: return fetch_row_cpir(kind, period, row, m);
      case Backend::Naive: return fetch_row_naive(kind, period, row, m);
    }
    throw std::logic_error("unreachable backend");
  }

  std::vector<std::uint8_t> fetch_row_itpir(DbKind kind, DbPeriod period, std::uint32_t row,
                                            const DbMeta& m) {
    auto queries = itpir_gen_queries(row, m.num_rows, params_, rng_);

    struct Outcome {
      std::size_t endpoint;
      Frame frame;
      std::size_t request_payload;
      bool failed;
    };
    // Parallel fan-out: one query per reachable server.
    std::vector<std::future<Outcome>> futures;
    for (std::size_t i = 0; i < endpoints_.size(); ++i) {
      if (!endpoints_[i].alive) continue;
      futures.push_back(std::async(std::launch::async, [this, i, kind, period, &queries]() {
        Frame request;
        request.type = static_cast<std::uint8_t>(MsgType::PirQuery);
        request.payload = route_payload(kind, period);
        request.payload.push_back(static_cast<std::uint8_t>(PirBackendId::ItPir));
        const auto& shares = queries[i].shares;
        request.payload.insert(request.payload.end(), shares.begin(), shares.end());
        Outcome out{i, {}, request.payload.size(), false};
        try {
          out.frame = endpoints_[i].channel->roundtrip(request);
        } catch (const ChannelError&) {
          out.failed = true;
        }
        return out;
      }));
    }

    std::vector<ItPirResponse> responses;
    for (auto& fut : futures) {
      Outcome out = fut.get();
      if (out.failed) {
        endpoints_[out.endpoint].alive = false;
        continue;
      }
      account(Category::Pir, out.request_payload, out.frame.payload.size());
      if (out.frame.type == static_cast<std::uint8_t>(MsgType::Error))
        throw ProtocolError("server rejected pir query");
      responses.push_back({static_cast<std::uint32_t>(out.endpoint), out.frame.payload});
    }
    return itpir_decode(responses, params_);
  }

  std::vector<std::uint8_t> fetch_row_cpir(DbKind kind, DbPeriod period, std::uint32_t row,
                                           const DbMeta& m) {
    if (!cpir_key_) cpir_key_ = cpir_keygen(cfg_.cpir_modulus_bits, rng_);
    Frame request;
    request.type = static_cast<std::uint8_t>(MsgType::PirQuery);
    request.payload = route_payload(kind, period);
    request.payload.push_back(static_cast<std::uint8_t>(PirBackendId::CPir));
    auto blob = cpir_gen_query(row, m.num_rows, *cpir_key_, rng_);
    request.payload.insert(request.payload.end(), blob.begin(), blob.end());

    auto& ep = first_alive();
    Frame response = ep.channel->roundtrip(request);
    account(Category::Pir, request.payload.size(), response.payload.size());
    if (response.type == static_cast<std::uint8_t>(MsgType::Error))
      throw ProtocolError("server rejected cpir query");
    CpirClientState state{*cpir_key_, m.num_rows, m.row_width};
    return cpir_decode(response.payload, state);
  }

  std::vector<std::uint8_t> fetch_row_naive(DbKind kind, DbPeriod period, std::uint32_t row,
                                            const DbMeta& m) {
    auto key = std::make_pair(kind, period);
    auto it = full_db_cache_.find(key);
    if (it == full_db_cache_.end()) {
      auto& ep = first_alive();
      Frame resp = request_endpoint(ep, MsgType::GetFullDb, route_payload(kind, period),
                                    Category::FullDb);
      if (resp.payload.size() != static_cast<std::size_t>(m.num_rows) * m.row_width)
        throw ProtocolError("full-db: size mismatch");
      it = full_db_cache_.emplace(key, std::move(resp.payload)).first;
    }
    const auto& payload = it->second;
    return {payload.begin() + static_cast<std::ptrdiff_t>(row) * m.row_width,
            payload.begin() + static_cast<std::ptrdiff_t>(row + 1) * m.row_width};
  }

  Endpoint& first_alive() {
    for (auto& ep : endpoints_)
      if (ep.alive) return ep;
    throw ProtocolError("no reachable server");
  }

  // Slices a manifest rectangle out of the fetched row span. Column units
  // are item units (62-byte entries, 32-byte txids, single bytes).
  std::vector<std::uint8_t> fetch_rectangle(DbKind kind, DbPeriod period,
                                            const ManifestRecord& rec) {
    const DbMeta m = meta(kind, period);
    auto rows = fetch_rows(kind, period, rec.row_start, rec.row_end);
    const std::uint32_t unit = m.item_unit;
    const std::uint32_t epr = m.row_width / unit;
    const std::uint64_t begin = static_cast<std::uint64_t>(rec.col_start) * unit;
    const std::uint64_t end =
        (static_cast<std::uint64_t>(rec.row_end - rec.row_start) * epr + rec.col_end + 1) * unit;
    if (end > rows.size() || begin >= end)
      throw ProtocolError("manifest rectangle out of bounds");
    return {rows.begin() + static_cast<std::ptrdiff_t>(begin),
            rows.begin() + static_cast<std::ptrdiff_t>(end)};
  }

  std::vector<LocatedEntry> fetch_address_record(const std::string& address, DbPeriod period,
                                                 const ManifestRecord& rec) {
    auto bytes = fetch_rectangle(DbKind::Address, period, rec);
    if (bytes.size() % AddressEntry::kSize != 0)
      throw ProtocolError("address record not entry aligned");
    std::vector<LocatedEntry> out;
    for (std::size_t off = 0; off < bytes.size(); off += AddressEntry::kSize) {
      auto entry = AddressEntry::unpack(
          std::span<const std::uint8_t>(bytes.data() + off, AddressEntry::kSize));
      if (entry.address_base58() != address)
        throw IntegrityError("address record contains a foreign entry");
      out.push_back({entry, period});
    }
    return out;
  }

  // Weekly, then monthly, then all-time: first manifest hit wins.
  std::pair<DbPeriod, ManifestRecord> locate(DbKind kind, const std::string& key) const {
    for (DbPeriod period : kAllPeriods) {
      auto rec = manifests_.at({kind, period}).lookup(key);
      if (rec) return {period, *rec};
    }
    throw ProtocolError("key not found in any " + std::string(kind_name(kind)) + " manifest: " +
                        key);
  }

  ClientConfig cfg_;
  Rng rng_;
  std::vector<Endpoint> endpoints_;
  PirParams params_;
  ByteCounters counters_;
  std::vector<BlockHeader> headers_;
  std::map<std::pair<DbKind, DbPeriod>, Manifest> manifests_;
  std::map<std::pair<DbKind, DbPeriod>, DbMeta> metas_;
  std::map<std::pair<DbKind, DbPeriod>, std::vector<std::uint8_t>> full_db_cache_;
  std::optional<CpirKey> cpir_key_;
};

}  // namespace pirspv
