#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirspv/baselines.hpp"
#include "pirspv/chain_gen.hpp"
#include "pirspv/channel.hpp"
#include "pirspv/client.hpp"
#include "pirspv/db_build.hpp"
#include "pirspv/server.hpp"

namespace pirspv {

inline DbPeriod period_from_name(const std::string& name) {
  for (DbPeriod p : kAllPeriods)
    if (name == period_name(p)) return p;
  throw std::invalid_argument("unknown period: " + name);
}

inline DbKind kind_from_name(const std::string& name) {
  for (DbKind k : kAllKinds)
    if (name == kind_name(k)) return k;
  throw std::invalid_argument("unknown database kind: " + name);
}

struct AnalyticDims {
  DbKind kind = DbKind::Address;
  DbPeriod period = DbPeriod::Weekly;
  std::uint64_t num_rows = 0;
  std::uint64_t row_width_bytes = 0;
};

// Experiment description, normally parsed from a JSON config file.
struct ExperimentConfig {
  std::optional<std::string> chain_file;
  ChainConfig synthetic;
  std::vector<DbPeriod> periods{DbPeriod::Weekly, DbPeriod::Monthly, DbPeriod::AllTime};
  std::vector<std::string> protocols{"bip37", "pir1", "pir3", "naive"};
  std::vector<std::uint32_t> sample_counts{1, 5, 10, 20};
  std::uint32_t repetitions = 5;
  double fp_rate = 0.0001;
  std::uint32_t t = 1;  // privacy level of the multi-server protocol
  std::uint32_t pir3_servers = 3;
  std::uint64_t seed = 1;
  bool sample_uniform_addresses = false;
  bool measure_latency = true;
  bool parallel = false;
  std::vector<AnalyticDims> analytic_dims;

  void validate() const {
    if (repetitions == 0) throw std::domain_error("bench: repetitions must be >= 1");
    if (sample_counts.empty()) throw std::domain_error("bench: sample_counts must not be empty");
    for (auto n : sample_counts)
      if (n == 0) throw std::domain_error("bench: sample counts must be positive");
    static const std::set<std::string> known{"bip37", "pir1", "pir3", "naive"};
    for (const auto& p : protocols)
      if (!known.count(p)) throw std::domain_error("bench: unknown protocol " + p);
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (j.contains("chain")) {
      const auto& jc = j.at("chain");
      if (jc.contains("file")) {
        cfg.chain_file = jc.at("file").get<std::string>();
      } else if (jc.contains("synthetic")) {
        const auto& js = jc.at("synthetic");
        auto range = [&](const char* key, std::uint32_t& lo, std::uint32_t& hi) {
          if (!js.contains(key)) return;
          lo = js.at(key).at(0).get<std::uint32_t>();
          hi = js.at(key).at(1).get<std::uint32_t>();
        };
        cfg.synthetic.n_blocks = js.value("n_blocks", cfg.synthetic.n_blocks);
        range("txs_per_block", cfg.synthetic.txs_per_block_min, cfg.synthetic.txs_per_block_max);
        range("outputs_per_tx", cfg.synthetic.outputs_per_tx_min,
              cfg.synthetic.outputs_per_tx_max);
        cfg.synthetic.n_addresses = js.value("n_addresses", cfg.synthetic.n_addresses);
        cfg.synthetic.spend_probability =
            js.value("spend_probability", cfg.synthetic.spend_probability);
        if (js.contains("difficulty_bits"))
          cfg.synthetic.difficulty_bits =
              std::stoul(js.at("difficulty_bits").get<std::string>(), nullptr, 16);
        cfg.synthetic.seed = js.value("seed", cfg.synthetic.seed);
      }
    }
    if (j.contains("periods")) {
      cfg.periods.clear();
      for (const auto& p : j.at("periods")) cfg.periods.push_back(period_from_name(p));
    }
    if (j.contains("protocols"))
      cfg.protocols = j.at("protocols").get<std::vector<std::string>>();
    if (j.contains("sample_counts"))
      cfg.sample_counts = j.at("sample_counts").get<std::vector<std::uint32_t>>();
    cfg.repetitions = j.value("repetitions", cfg.repetitions);
    cfg.fp_rate = j.value("fp_rate", cfg.fp_rate);
    if (j.contains("pir")) {
      cfg.t = j.at("pir").value("t", cfg.t);
      cfg.pir3_servers = j.at("pir").value("servers", cfg.pir3_servers);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.sample_uniform_addresses =
        j.value("sample_uniform_addresses", cfg.sample_uniform_addresses);
    cfg.measure_latency = j.value("measure_latency", cfg.measure_latency);
    cfg.parallel = j.value("parallel", cfg.parallel);
    if (j.contains("analytic_dims")) {
      for (const auto& jd : j.at("analytic_dims")) {
        AnalyticDims d;
        d.kind = kind_from_name(jd.at("kind").get<std::string>());
        d.period = period_from_name(jd.at("period").get<std::string>());
        d.num_rows = jd.at("num_rows").get<std::uint64_t>();
        d.row_width_bytes = jd.at("row_width_bytes").get<std::uint64_t>();
        cfg.analytic_dims.push_back(d);
      }
    }
    cfg.validate();
    return cfg;
  }
};

struct BenchRecord {
  std::string protocol;
  DbPeriod period = DbPeriod::Weekly;
  std::uint32_t n_txs = 0;
  double bytes_mean = 0;
  double bytes_std = 0;
  double latency_mean = 0;
};

namespace benchdetail {

struct SampledEntry {
  std::string address;
  UtxoRef ref;
};

struct Measurement {
  std::uint64_t bytes = 0;
  double latency = 0;
};

inline ClientConfig protocol_client_config(const std::string& protocol,
                                           const ExperimentConfig& cfg, std::uint64_t seed) {
  ClientConfig ccfg;
  ccfg.backend = Backend::ItPir;
  ccfg.seed = seed;
  if (protocol == "pir1") {
    ccfg.t = 0;  // degenerate single-server accounting run
    ccfg.v = 0;
  } else {
    ccfg.t = cfg.t;
    ccfg.v = 0;
  }
  return ccfg;
}

inline std::unique_ptr<ClientSession> make_session(const std::string& protocol,
                                                   const ExperimentConfig& cfg,
                                                   std::shared_ptr<const ServerData> data,
                                                   std::uint64_t seed) {
  const std::size_t n_servers = protocol == "pir3" ? cfg.pir3_servers : 1;
  std::vector<std::unique_ptr<Channel>> channels;
  for (std::size_t i = 0; i < n_servers; ++i)
    channels.push_back(std::make_unique<LoopbackChannel>(data, static_cast<std::uint8_t>(i)));
  auto session = std::make_unique<ClientSession>(std::move(channels),
                                                 protocol_client_config(protocol, cfg, seed));
  session->sync_headers();
  session->fetch_manifests();
  return session;
}

// One full three-round execution for one entry, bytes counted as query
// plus response payloads (framing excluded, like the deducted message
// headers of the reference protocols).
inline Measurement measure_pir(ClientSession& session, const SampledEntry& sample,
                               DbPeriod period) {
  const std::uint64_t before = session.counters().protocol_payload();
  const auto t0 = std::chrono::steady_clock::now();
  auto located = session.query_address_in_period(sample.address, period);
  const LocatedEntry* hit = nullptr;
  for (const auto& le : located)
    if (le.entry.txid == sample.ref.txid && le.entry.vout == sample.ref.vout) hit = &le;
  if (hit == nullptr) throw std::runtime_error("bench: sampled entry missing from database");
  SpvResult result = session.verify_entry(*hit, 0);
  if (!result.verified)
    throw std::runtime_error("bench: sampled entry failed verification: " +
                             result.failure_reason);
  Measurement m;
  m.bytes = session.counters().protocol_payload() - before;
  m.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

inline std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace benchdetail

// Aggregated mean/std table, one line per protocol and period cell.
inline std::string report_tables(const std::vector<BenchRecord>& records) {
  std::string out = "protocol,period,n_txs,bytes_mean,bytes_std,latency_s\n";
  for (const auto& r : records) {
    out += r.protocol;
    out += ',';
    out += period_name(r.period);
    out += ',';
    out += std::to_string(r.n_txs);
    out += ',';
    out += benchdetail::csv_double(r.bytes_mean);
    out += ',';
    out += benchdetail::csv_double(r.bytes_std);
    out += ',';
    out += benchdetail::csv_double(r.latency_mean);
    out += '\n';
  }
  return out;
}

struct ExperimentOutput {
  std::vector<BenchRecord> cdf_records;      // per protocol, period, sample count
  std::vector<BenchRecord> table_records;    // per protocol, period (n_txs = 1)
  std::string histogram_csv;
  std::string cdf_csv;
  std::string tables_csv;
  std::string predicted_csv;
};

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  std::vector<Block> blocks;
  UtxoGroundTruth truth;
  if (cfg.chain_file) {
    blocks = read_chain_file(*cfg.chain_file);
    // ground truth from a replay over the loaded chain
    auto snap = scan_utxo(blocks);
    for (const auto& [key, out] : snap.live)
      truth[out.address].push_back(
          {key.first, out.height, static_cast<std::uint8_t>(key.second), out.value});
    for (auto& [addr, refs] : truth) std::sort(refs.begin(), refs.end());
  } else {
    auto chain = generate_synthetic_chain(cfg.synthetic);
    blocks = std::move(chain.blocks);
    truth = std::move(chain.utxo);
  }

  auto build = build_all(blocks);
  auto data = std::make_shared<const ServerData>(server_data_from_build(build));

  // Sample pools per period, in deterministic (address, height) order.
  std::map<DbPeriod, std::vector<benchdetail::SampledEntry>> pools;
  for (const auto& [hash, refs] : truth) {
    auto payload = address_payload_from_hash160(hash);
    std::string addr =
        base58check_encode(0x00, std::span<const std::uint8_t>(payload.data() + 1, 20));
    for (const auto& ref : refs)
      pools[build.partition.period_of(ref.height)].push_back({addr, ref});
  }

  Rng master(cfg.seed);
  const std::uint64_t sample_seed = master.fork_seed();
  const std::uint64_t tweak_seed = master.fork_seed();
  const std::uint64_t query_seed = master.fork_seed();

  // Draw every pick up front so all protocols measure the same txids.
  struct Pick {
    benchdetail::SampledEntry entry;
    std::uint32_t tweak;  // fresh filter per txid
  };
  // picks[period][sample_count index][repetition] = list of k entries
  std::map<DbPeriod, std::vector<std::vector<std::vector<Pick>>>> picks;
  {
    Rng sample_rng(sample_seed);
    Rng tweak_rng(tweak_seed);
    for (DbPeriod period : cfg.periods) {
      auto& pool = pools[period];
      auto& per_period = picks[period];
      per_period.resize(cfg.sample_counts.size());
      if (pool.empty()) continue;

      // Optional two-stage draw: address first, then one of its entries.
      std::map<std::string, std::vector<std::size_t>> by_address;
      std::vector<std::string> addresses;
      if (cfg.sample_uniform_addresses) {
        for (std::size_t i = 0; i < pool.size(); ++i)
          by_address[pool[i].address].push_back(i);
        for (const auto& [a, idx] : by_address) addresses.push_back(a);
      }
      auto draw = [&]() -> const benchdetail::SampledEntry& {
        if (cfg.sample_uniform_addresses) {
          const auto& addr = addresses[sample_rng.below(addresses.size())];
          const auto& idx = by_address[addr];
          return pool[idx[sample_rng.below(idx.size())]];
        }
        return pool[sample_rng.below(pool.size())];
      };
      for (std::size_t ki = 0; ki < cfg.sample_counts.size(); ++ki) {
        per_period[ki].resize(cfg.repetitions);
        for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
          for (std::uint32_t i = 0; i < cfg.sample_counts[ki]; ++i)
            per_period[ki][rep].push_back(
                {draw(), static_cast<std::uint32_t>(tweak_rng.next_u64())});
        }
      }
    }
  }

  // Measure each pick, per protocol. PIR protocols execute the real
  // client; bip37 and naive are analytic cost models over the same picks.
  ExperimentOutput out;
  out.histogram_csv = "protocol,period,txid,bytes\n";
  out.cdf_csv = "protocol,period,n_txs,bytes_mean,bytes_std,latency_s\n";

  std::map<std::string, std::unique_ptr<ClientSession>> sessions;
  for (const auto& protocol : cfg.protocols)
    if (protocol == "pir1" || protocol == "pir3")
      sessions[protocol] = benchdetail::make_session(protocol, cfg, data, query_seed);

  for (const auto& protocol : cfg.protocols) {
    for (DbPeriod period : cfg.periods) {
      const auto [pbegin, pend] = build.partition.range(period);
      std::span<const Block> period_blocks(blocks.data() + pbegin, pend - pbegin);
      auto& per_period = picks[period];
      if (pools[period].empty()) continue;

      // Measure every pick into a structure mirroring picks[][][]; the
      // parallel path fans repetitions out to worker sessions, byte counts
      // are identical either way.
      std::vector<std::vector<std::vector<benchdetail::Measurement>>> measured(
          cfg.sample_counts.size());
      auto measure_rep = [&](std::size_t ki, std::uint32_t rep, ClientSession* session) {
        auto& slot = measured[ki][rep];
        slot.resize(per_period[ki][rep].size());
        for (std::size_t i = 0; i < slot.size(); ++i) {
          const Pick& pick = per_period[ki][rep][i];
          if (session != nullptr) {
            slot[i] = benchdetail::measure_pir(*session, pick.entry, period);
          } else if (protocol == "bip37") {
            slot[i].bytes =
                bip37_bandwidth(pick.entry.ref.txid, period_blocks, cfg.fp_rate, pick.tweak)
                    .total();
          } else {  // naive
            slot[i].bytes = naive_bandwidth(pick.entry.ref.txid, blocks);
          }
        }
      };
      const bool is_pir = protocol == "pir1" || protocol == "pir3";
      for (std::size_t ki = 0; ki < cfg.sample_counts.size(); ++ki)
        measured[ki].resize(cfg.repetitions);
      if (cfg.parallel) {
        std::vector<std::pair<std::size_t, std::uint32_t>> jobs;
        for (std::size_t ki = 0; ki < cfg.sample_counts.size(); ++ki)
          for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) jobs.emplace_back(ki, rep);
        std::atomic<std::size_t> next{0};
        const std::size_t n_workers =
            std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), jobs.size());
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < n_workers; ++w) {
          workers.emplace_back([&, w] {
            std::unique_ptr<ClientSession> own;
            if (is_pir) own = benchdetail::make_session(protocol, cfg, data, query_seed + w);
            for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1))
              measure_rep(jobs[j].first, jobs[j].second, own.get());
          });
        }
        for (auto& t : workers) t.join();
      } else {
        for (std::size_t ki = 0; ki < cfg.sample_counts.size(); ++ki)
          for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep)
            measure_rep(ki, rep, is_pir ? sessions[protocol].get() : nullptr);
      }

      std::vector<double> all_bytes;  // one value per measured pick
      for (std::size_t ki = 0; ki < cfg.sample_counts.size(); ++ki) {
        std::vector<double> totals(cfg.repetitions, 0.0);
        std::vector<double> latencies(cfg.repetitions, 0.0);
        for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
          for (std::size_t i = 0; i < measured[ki][rep].size(); ++i) {
            const benchdetail::Measurement& m = measured[ki][rep][i];
            totals[rep] += static_cast<double>(m.bytes);
            latencies[rep] += m.latency;
            all_bytes.push_back(static_cast<double>(m.bytes));
            out.histogram_csv += protocol + "," + period_name(period) + "," +
                                 to_hex(per_period[ki][rep][i].entry.ref.txid) + "," +
                                 std::to_string(m.bytes) + "\n";
          }
        }
        BenchRecord rec;
        rec.protocol = protocol;
        rec.period = period;
        rec.n_txs = cfg.sample_counts[ki];
        double mean = 0;
        for (double t : totals) mean += t;
        mean /= cfg.repetitions;
        double var = 0;
        for (double t : totals) var += (t - mean) * (t - mean);
        var /= cfg.repetitions;
        rec.bytes_mean = mean;
        rec.bytes_std = std::sqrt(var);
        double lat = 0;
        for (double l : latencies) lat += l;
        rec.latency_mean = cfg.measure_latency ? lat / cfg.repetitions : 0.0;
        out.cdf_records.push_back(rec);
        out.cdf_csv += protocol + "," + std::string(period_name(period)) + "," +
                       std::to_string(rec.n_txs) + "," + benchdetail::csv_double(rec.bytes_mean) +
                       "," + benchdetail::csv_double(rec.bytes_std) + "," +
                       benchdetail::csv_double(rec.latency_mean) + "\n";
      }

      BenchRecord table;
      table.protocol = protocol;
      table.period = period;
      table.n_txs = 1;
      double mean = 0;
      for (double b : all_bytes) mean += b;
      mean /= static_cast<double>(all_bytes.size());
      double var = 0;
      for (double b : all_bytes) var += (b - mean) * (b - mean);
      var /= static_cast<double>(all_bytes.size());
      table.bytes_mean = mean;
      table.bytes_std = std::sqrt(var);
      out.table_records.push_back(table);
    }
  }
  out.tables_csv = report_tables(out.table_records);

  if (!cfg.analytic_dims.empty()) {
    out.predicted_csv = "kind,period,num_rows,row_width_bytes,servers,bytes_per_row_fetch\n";
    for (const auto& d : cfg.analytic_dims) {
      for (std::uint32_t servers : {1u, 3u}) {
        const std::uint64_t bytes = servers * (d.num_rows + d.row_width_bytes);
        out.predicted_csv += std::string(kind_name(d.kind)) + "," + period_name(d.period) + "," +
                             std::to_string(d.num_rows) + "," +
                             std::to_string(d.row_width_bytes) + "," + std::to_string(servers) +
                             "," + std::to_string(bytes) + "\n";
      }
    }
  }
  return out;
}

inline void write_experiment_output(const std::string& out_dir, const ExperimentOutput& out) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& content) {
    if (content.empty()) return;
    std::ofstream os(out_dir + "/" + name);
    if (!os) throw std::runtime_error("cannot write " + out_dir + "/" + name);
    os << content;
  };
  write("histogram.csv", out.histogram_csv);
  write("cdf.csv", out.cdf_csv);
  write("tables.csv", out.tables_csv);
  write("predicted.csv", out.predicted_csv);
}

}  // namespace pirspv
