#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "pirspv/baselines.hpp"
#include "pirspv/bench.hpp"

using namespace pirspv;

namespace {

ExperimentConfig small_experiment(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.synthetic.n_blocks = 60;
  cfg.synthetic.txs_per_block_min = 1;
  cfg.synthetic.txs_per_block_max = 3;
  cfg.synthetic.n_addresses = 12;
  cfg.synthetic.outputs_per_tx_min = 1;
  cfg.synthetic.outputs_per_tx_max = 2;
  cfg.synthetic.spend_probability = 0.5;
  cfg.synthetic.seed = seed;
  cfg.periods = {DbPeriod::Weekly};  // 60 blocks all land in the weekly slice
  cfg.protocols = {"bip37", "pir1", "pir3", "naive"};
  cfg.sample_counts = {1, 3};
  cfg.repetitions = 2;
  cfg.seed = seed ^ 0x77;
  cfg.measure_latency = false;
  return cfg;
}

std::vector<std::string> lines_of(const std::string& csv) {
  std::vector<std::string> lines;
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("experiment config json parsing") {
  auto j = nlohmann::json::parse(R"({
    "chain": {"synthetic": {"n_blocks": 100, "txs_per_block": [1, 4], "n_addresses": 9,
                             "outputs_per_tx": [1, 2], "spend_probability": 0.4,
                             "difficulty_bits": "207fffff", "seed": 5}},
    "periods": ["weekly", "monthly"],
    "protocols": ["pir1", "naive"],
    "sample_counts": [1, 2, 3],
    "repetitions": 4,
    "fp_rate": 0.001,
    "pir": {"t": 1, "servers": 3},
    "seed": 99,
    "measure_latency": false,
    "analytic_dims": [{"kind": "address", "period": "weekly",
                       "num_rows": 7688, "row_width_bytes": 7688}]
  })");
  auto cfg = ExperimentConfig::from_json(j);
  CHECK(cfg.synthetic.n_blocks == 100);
  CHECK(cfg.synthetic.txs_per_block_max == 4);
  CHECK(cfg.synthetic.difficulty_bits == 0x207fffff);
  CHECK(cfg.periods == std::vector<DbPeriod>{DbPeriod::Weekly, DbPeriod::Monthly});
  CHECK(cfg.protocols == std::vector<std::string>{"pir1", "naive"});
  CHECK(cfg.repetitions == 4);
  CHECK(cfg.fp_rate == 0.001);
  CHECK(cfg.seed == 99);
  CHECK_FALSE(cfg.measure_latency);
  REQUIRE(cfg.analytic_dims.size() == 1);
  CHECK(cfg.analytic_dims[0].num_rows == 7688);

  CHECK_THROWS(ExperimentConfig::from_json(nlohmann::json::parse(
      R"({"protocols": ["quantum"]})")));
}

TEST_CASE("experiment outputs are deterministic and internally consistent") {
  auto cfg = small_experiment(0xbe9c1);
  auto out1 = run_experiment(cfg);
  auto out2 = run_experiment(cfg);

  SECTION("fixed seeds reproduce byte-identical CSVs") {
    CHECK(out1.histogram_csv == out2.histogram_csv);
    CHECK(out1.cdf_csv == out2.cdf_csv);
    CHECK(out1.tables_csv == out2.tables_csv);
  }

  SECTION("histogram row count is samples times repetitions per protocol") {
    // sum(sample_counts) * repetitions picks per protocol, one period
    const std::size_t picks = (1 + 3) * 2;
    auto lines = lines_of(out1.histogram_csv);
    CHECK(lines.size() == 1 + picks * cfg.protocols.size());
  }

  SECTION("pir3 bandwidth is exactly three times pir1 per pick") {
    std::map<std::string, std::vector<std::uint64_t>> by_protocol;
    for (const auto& line : lines_of(out1.histogram_csv)) {
      if (line.rfind("pir", 0) != 0) continue;
      auto comma = line.find(',');
      auto last = line.rfind(',');
      by_protocol[line.substr(0, comma)].push_back(std::stoull(line.substr(last + 1)));
    }
    REQUIRE(by_protocol["pir1"].size() == by_protocol["pir3"].size());
    for (std::size_t i = 0; i < by_protocol["pir1"].size(); ++i)
      CHECK(by_protocol["pir3"][i] == 3 * by_protocol["pir1"][i]);
  }

  SECTION("naive rows equal the independent inclusive block sums") {
    auto chain = generate_synthetic_chain(cfg.synthetic);
    for (const auto& line : lines_of(out1.histogram_csv)) {
      if (line.rfind("naive,", 0) != 0) continue;
      auto parts = line;
      auto first = parts.find(',');
      auto second = parts.find(',', first + 1);
      auto third = parts.find(',', second + 1);
      const Hash256 id = from_hex_fixed<32>(parts.substr(second + 1, third - second - 1));
      const std::uint64_t bytes = std::stoull(parts.substr(third + 1));
      CHECK(bytes == naive_bandwidth(id, chain.blocks));
    }
  }

  SECTION("cdf covers every configured protocol and sample count") {
    auto lines = lines_of(out1.cdf_csv);
    CHECK(lines.size() == 1 + cfg.protocols.size() * cfg.sample_counts.size());
    // single-record repetitions have nonnegative std
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto pos = lines[i].rfind(',');
      CHECK(std::stod(lines[i].substr(pos + 1)) == 0.0);  // latency zeroed
    }
  }

  SECTION("tables cover all protocol cells") {
    auto lines = lines_of(out1.tables_csv);
    CHECK(lines.size() == 1 + cfg.protocols.size());
  }
}

TEST_CASE("report_tables arithmetic") {
  std::vector<BenchRecord> records;
  BenchRecord r;
  r.protocol = "pir1";
  r.period = DbPeriod::Weekly;
  r.n_txs = 1;
  r.bytes_mean = 1234.5;
  r.bytes_std = 0.0;
  r.latency_mean = 0.25;
  records.push_back(r);
  auto text = report_tables(records);
  CHECK(text.find("pir1,weekly,1,1234.500000,0.000000,0.250000") != std::string::npos);
}

TEST_CASE("parallel execution reproduces sequential byte counts") {
  auto cfg = small_experiment(0xbe9c2);
  auto sequential = run_experiment(cfg);
  cfg.parallel = true;
  auto parallel = run_experiment(cfg);
  CHECK(sequential.histogram_csv == parallel.histogram_csv);
  CHECK(sequential.tables_csv == parallel.tables_csv);
}

TEST_CASE("analytic predictions follow the linear cost formula") {
  auto cfg = small_experiment(0xbe9c3);
  cfg.protocols = {"pir1"};
  AnalyticDims d;
  d.kind = DbKind::Address;
  d.period = DbPeriod::Weekly;
  d.num_rows = 7688;
  d.row_width_bytes = 7688;
  cfg.analytic_dims.push_back(d);
  auto out = run_experiment(cfg);
  auto lines = lines_of(out.predicted_csv);
  REQUIRE(lines.size() == 3);  // header + 1 and 3 server rows
  CHECK(lines[1] == "address,weekly,7688,7688,1,15376");
  CHECK(lines[2] == "address,weekly,7688,7688,3,46128");
}

TEST_CASE("tables aggregate the histogram exactly") {
  auto cfg = small_experiment(0xbe9c4);
  cfg.protocols = {"naive"};
  auto out = run_experiment(cfg);

  double sum = 0;
  std::size_t n = 0;
  for (const auto& line : lines_of(out.histogram_csv)) {
    if (line.rfind("naive,", 0) != 0) continue;
    sum += std::stod(line.substr(line.rfind(',') + 1));
    ++n;
  }
  REQUIRE(out.table_records.size() == 1);
  CHECK(out.table_records[0].bytes_mean == Catch::Approx(sum / n));
}
