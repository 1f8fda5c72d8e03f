#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "pirspv/bench.hpp"
#include "pirspv/chain_gen.hpp"
#include "pirspv/channel.hpp"
#include "pirspv/client.hpp"
#include "pirspv/db_build.hpp"
#include "pirspv/server.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

std::pair<std::string, std::uint16_t> split_host_port(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos)
    throw CLI::ValidationError("expected host:port, got " + text);
  return {text.substr(0, colon),
          static_cast<std::uint16_t>(std::stoul(text.substr(colon + 1)))};
}

int cmd_genchain(const pirspv::ChainConfig& cfg, const std::string& out_path) {
  auto chain = pirspv::generate_synthetic_chain(cfg);
  std::ofstream os(out_path);
  if (!os) {
    std::cerr << "cannot open " << out_path << " for writing\n";
    return 1;
  }
  pirspv::write_chain_jsonl(os, chain.blocks);
  std::size_t n_utxos = 0;
  for (const auto& [addr, refs] : chain.utxo) n_utxos += refs.size();
  std::cout << "wrote " << chain.blocks.size() << " blocks (" << chain.utxo.size()
            << " funded addresses, " << n_utxos << " utxos) to " << out_path << "\n";
  return 0;
}

int cmd_build(const std::string& chain_path, const std::string& data_dir) {
  auto blocks = pirspv::read_chain_file(chain_path);
  auto build = pirspv::build_all(blocks);
  pirspv::write_build_dir(data_dir, build);
  std::cout << "built " << build.databases.size() << " databases from " << blocks.size()
            << " blocks into " << data_dir << "\n";
  for (const auto& [key, built] : build.databases) {
    std::cout << "  " << pirspv::db_filename(key.first, key.second) << ": "
              << built.db.num_rows << " rows x " << built.db.row_width << " bytes, "
              << built.manifest.records.size() << " manifest records\n";
  }
  return 0;
}

int cmd_serve(const std::string& data_dir, const std::string& listen,
              std::uint32_t server_index) {
  auto [host, port] = split_host_port(listen);
  auto data = std::make_shared<const pirspv::ServerData>(pirspv::load_server_data(data_dir));
  pirspv::TcpServer server(data, static_cast<std::uint8_t>(server_index));
  const std::uint16_t bound = server.start(host, port);
  std::cout << "serving " << data_dir << " on " << host << ":" << bound << " as server "
            << server_index << " (alpha " << int(server.core().alpha()) << ")" << std::endl;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  std::cout << "stopped\n";
  return 0;
}

int cmd_query(const std::vector<std::string>& servers, const std::string& backend_name,
              const std::string& address, std::uint32_t t, std::uint32_t v,
              std::uint32_t min_conf, std::uint64_t seed, std::uint32_t cpir_bits,
              const std::string& stats_out) {
  pirspv::ClientConfig cfg;
  cfg.backend = pirspv::backend_from_name(backend_name);
  cfg.t = t;
  cfg.v = v;
  cfg.seed = seed;
  cfg.cpir_modulus_bits = cpir_bits;
  cfg.min_confirmations = min_conf;

  std::vector<std::unique_ptr<pirspv::Channel>> channels;
  for (const auto& s : servers) {
    auto [host, port] = split_host_port(s);
    channels.push_back(std::make_unique<pirspv::TcpChannel>(host, port));
  }
  pirspv::ClientSession session(std::move(channels), cfg);
  session.sync_headers();
  std::cout << "synced " << session.headers().size() << " headers\n";
  session.fetch_manifests();

  auto results = session.pir_spv(address, min_conf);
  if (results.empty()) {
    std::cout << "no unspent outputs recorded for " << address << "\n";
  }
  std::size_t verified = 0;
  for (const auto& r : results) {
    std::cout << (r.verified ? "VERIFIED " : "FAILED   ") << pirspv::to_hex(r.txid)
              << " height " << r.block_height << " period " << pirspv::period_name(r.period)
              << " bytes " << r.bandwidth_bytes() << " latency "
              << r.latency_seconds() << "s";
    if (!r.verified) std::cout << " (" << r.failure_reason << ")";
    std::cout << "\n";
    verified += r.verified ? 1 : 0;
  }
  const auto& c = session.counters();
  std::cout << "entries verified: " << verified << "/" << results.size() << "\n";
  std::cout << "bandwidth: headers " << c.headers << " B, manifests " << c.manifests
            << " B, queries " << c.pir_query << " B, responses " << c.pir_response
            << " B, full downloads " << c.full_db << " B, framing " << c.pir_overhead
            << " B\n";

  if (!stats_out.empty()) {
    std::ofstream os(stats_out);
    if (!os) {
      std::cerr << "cannot write " << stats_out << "\n";
      return 1;
    }
    os << "address,period,height,txid,verified,reason,round_a_bytes,round_b_bytes,"
          "round_c_bytes,total_bytes,latency_s\n";
    for (const auto& r : results) {
      os << r.address << ',' << pirspv::period_name(r.period) << ',' << r.block_height << ','
         << pirspv::to_hex(r.txid) << ',' << (r.verified ? 1 : 0) << ','
         << (r.failure_reason.empty() ? "ok" : r.failure_reason) << ','
         << r.round_address.bytes << ',' << r.round_merkle.bytes << ','
         << r.round_transaction.bytes << ',' << r.bandwidth_bytes() << ','
         << r.latency_seconds() << "\n";
    }
  }
  return verified == results.size() ? 0 : 2;
}

int cmd_bench(const std::string& config_path, const std::string& out_dir) {
  std::ifstream is(config_path);
  if (!is) {
    std::cerr << "cannot open config " << config_path << "\n";
    return 1;
  }
  auto cfg = pirspv::ExperimentConfig::from_json(nlohmann::json::parse(is));
  auto out = pirspv::run_experiment(cfg);
  pirspv::write_experiment_output(out_dir, out);
  std::cout << out.tables_csv;
  std::cout << "wrote histogram.csv, cdf.csv, tables.csv"
            << (out.predicted_csv.empty() ? "" : ", predicted.csv") << " to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PIR-backed private SPV: build, serve, query and benchmark"};
  app.require_subcommand(1);

  // genchain
  pirspv::ChainConfig chain_cfg;
  chain_cfg.n_blocks = 200;
  std::string chain_out = "chain.jsonl";
  std::string bits_hex = "207fffff";
  auto* genchain = app.add_subcommand("genchain", "generate a synthetic chain as JSON lines");
  genchain->add_option("--blocks", chain_cfg.n_blocks, "number of blocks");
  genchain->add_option("--seed", chain_cfg.seed, "generator seed");
  genchain->add_option("--addresses", chain_cfg.n_addresses, "size of the address pool");
  genchain->add_option("--txs-min", chain_cfg.txs_per_block_min, "min spends per block");
  genchain->add_option("--txs-max", chain_cfg.txs_per_block_max, "max spends per block");
  genchain->add_option("--outputs-min", chain_cfg.outputs_per_tx_min, "min outputs per tx");
  genchain->add_option("--outputs-max", chain_cfg.outputs_per_tx_max, "max outputs per tx");
  genchain->add_option("--spend-prob", chain_cfg.spend_probability, "spend probability");
  genchain->add_option("--bits", bits_hex, "compact difficulty target, hex");
  genchain->add_option("--out", chain_out, "output path");

  // build
  std::string build_chain, build_dir = "data";
  auto* build = app.add_subcommand("build", "build the PIR databases and manifests");
  build->add_option("--chain", build_chain, "chain JSON-lines file")->required();
  build->add_option("--data-dir", build_dir, "output directory");

  // serve
  std::string serve_dir = "data", listen = "127.0.0.1:7100";
  std::uint32_t server_index = 0;
  auto* serve = app.add_subcommand("serve", "serve databases over the framed TCP protocol");
  serve->add_option("--data-dir", serve_dir, "directory with databases and manifests");
  serve->add_option("--listen", listen, "listen address host:port");
  serve->add_option("--server-index", server_index, "this server's index");

  // query
  std::string servers_csv, backend = "itpir", address, stats_out;
  std::uint32_t t = 1, v = 0, min_conf = 6, cpir_bits = 1024;
  std::uint64_t query_seed = 0;
  auto* query = app.add_subcommand("query", "run the private SPV protocol for an address");
  query->add_option("--servers", servers_csv, "comma-separated host:port list")->required();
  query->add_option("--backend", backend, "itpir | cpir | naive");
  query->add_option("--address", address, "base58check P2PKH address")->required();
  query->add_option("--t", t, "privacy level (max colluding servers)");
  query->add_option("--v", v, "Byzantine responses to correct");
  query->add_option("--min-conf", min_conf, "required confirmations");
  query->add_option("--seed", query_seed, "query randomness seed (0 = system entropy)");
  query->add_option("--cpir-bits", cpir_bits, "cpir modulus size in bits");
  query->add_option("--stats-out", stats_out, "write per-entry stats CSV here");

  // bench
  std::string bench_config, bench_out = "bench-out";
  auto* bench = app.add_subcommand("bench", "run the protocol comparison experiments");
  bench->add_option("--config", bench_config, "experiment config JSON")->required();
  bench->add_option("--out-dir", bench_out, "CSV output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (genchain->parsed()) {
      chain_cfg.difficulty_bits = static_cast<std::uint32_t>(std::stoul(bits_hex, nullptr, 16));
      return cmd_genchain(chain_cfg, chain_out);
    }
    if (build->parsed()) return cmd_build(build_chain, build_dir);
    if (serve->parsed()) return cmd_serve(serve_dir, listen, server_index);
    if (query->parsed()) {
      std::vector<std::string> servers;
      std::stringstream ss(servers_csv);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) servers.push_back(item);
      return cmd_query(servers, backend, address, t, v, min_conf, query_seed, cpir_bits,
                       stats_out);
    }
    if (bench->parsed()) return cmd_bench(bench_config, bench_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
