#include "stagekit/bench.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "stagekit/errors.hpp"
#include "testutil.hpp"

using namespace stagekit;
using namespace stagekit::bench;

namespace {

ExperimentConfig small_staging_config() {
  Config cfg = Config::parse(R"(
[experiment]
scenario = staging_scaling
backend = sim
nodes = 1,2,4
agents_per_node = 2
seed = 9

[dataset]
file_count = 4
total_bytes = 4e6

[cost]
b_fs_bytes_per_s = 1e9
r_meta_ops_per_s = 1e6
l_meta_s = 1e-5
gamma = 0.5

[net]
b_net_bytes_per_s = 10e9
alpha_s = 1e-7
chunk_bytes = 4194304

[cache]
b_local_bytes_per_s = 2e9
b_lr_bytes_per_s = 2e9
)");
  return ExperimentConfig::from_config(cfg);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    rows.push_back(std::move(fields));
  }
  return rows;
}

size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::runtime_error("no column " + name);
}

}  // namespace

TEST(ConfigParse, SectionedKeys) {
  Config cfg = Config::parse("[a]\nx = 1\n# comment\n[b]\nx = 2.5e3\nlist = 1,2,3\n");
  EXPECT_EQ(cfg.get_int("a.x"), 1);
  EXPECT_DOUBLE_EQ(cfg.get_double("b.x"), 2500.0);
  EXPECT_EQ(cfg.get_int_list("b.list"), (std::vector<int64_t>{1, 2, 3}));
  EXPECT_THROW(cfg.get_string("a.missing"), ConfigError);
  EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
}

TEST(ExperimentConfigTest, ValidationCatchesBadShapes) {
  ExperimentConfig cfg = small_staging_config();
  cfg.node_counts = {4, 2};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_staging_config();
  cfg.node_counts = {0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_staging_config();
  cfg.params.cost.b_fs_bytes_per_s = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Dataset, EvenSplitWithRemainder) {
  DatasetSpec ds;
  ds.file_count = 3;
  ds.total_bytes = 10;
  auto files = ds.files();
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].second, 4u);
  EXPECT_EQ(files[1].second, 3u);
  EXPECT_EQ(files[2].second, 3u);
  EXPECT_EQ(files[0].first, "data/file0000.bin");
}

TEST(Oracle, SingleNodeDegenerateEquality) {
  ExperimentConfig cfg = small_staging_config();
  OraclePrediction p = oracle_predict(cfg, 1);
  // with one node the collective shared-read term equals the independent
  // read term exactly; ring and bcast vanish
  double s = static_cast<double>(p.total_bytes) / cfg.params.cost.b_fs_bytes_per_s;
  double meta = cfg.params.cost.charge_meta_resolve(1, 1, 4, 4);
  EXPECT_NEAR(p.staging_s, s + meta, 1e-12);
  EXPECT_NEAR(p.independent_s, s + meta, 1e-12);
}

// Hand-evaluated oracle: n=4, S=100 MB, one file, B_fs=1 GB/s (gamma 0),
// B_net=10 GB/s, B_local=B_lr=2 GB/s -> staging 0.1075, write 0.05,
// read 0.05, independent 0.4.
TEST(Oracle, HandEvaluatedPoint) {
  Config cfg = Config::parse(R"(
[experiment]
scenario = staging_scaling
nodes = 4
seed = 1
[dataset]
file_count = 1
total_bytes = 100e6
[cost]
b_fs_bytes_per_s = 1e9
r_meta_ops_per_s = 1e15
l_meta_s = 0
gamma = 0
[net]
b_net_bytes_per_s = 10e9
alpha_s = 0
[cache]
b_local_bytes_per_s = 2e9
b_lr_bytes_per_s = 2e9
)");
  ExperimentConfig e = ExperimentConfig::from_config(cfg);
  OraclePrediction p = oracle_predict(e, 4);
  EXPECT_NEAR(p.staging_s, 0.1075, 0.1075 * 1e-6);
  EXPECT_DOUBLE_EQ(p.write_s, 0.05);
  EXPECT_DOUBLE_EQ(p.read_s, 0.05);
  EXPECT_NEAR(p.independent_s, 0.4, 0.4 * 1e-9);
}

TEST(Scaling, SimMatchesOracleWithinTolerance) {
  ExperimentConfig cfg = small_staging_config();
  std::string csv = run_experiment(cfg);
  auto rows = parse_csv(csv);
  ASSERT_GE(rows.size(), 7u);  // header + 3 node counts x 2 modes
  EXPECT_EQ(rows[0], parse_csv(std::string(kScalingCsvHeader) + "\n")[0]);
  size_t rel_col = column(rows[0], "rel_err");
  for (size_t i = 1; i < rows.size(); ++i) {
    double rel = std::stod(rows[i][rel_col]);
    EXPECT_LE(rel, 1e-6) << "row " << i << ": " << csv;
  }
}

TEST(Scaling, EndToEndIncludesReadPhase) {
  ExperimentConfig cfg = small_staging_config();
  cfg.scenario = Scenario::input_end_to_end;
  std::string csv = run_experiment(cfg);
  auto rows = parse_csv(csv);
  size_t read_col = column(rows[0], "read_s");
  size_t mode_col = column(rows[0], "mode");
  size_t rel_col = column(rows[0], "rel_err");
  bool saw_collective = false;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][mode_col] == "collective") {
      saw_collective = true;
      EXPECT_GT(std::stod(rows[i][read_col]), 0.0);
      EXPECT_LE(std::stod(rows[i][rel_col]), 1e-6);
    }
  }
  EXPECT_TRUE(saw_collective);
}

TEST(Scaling, ReproducibleByteIdenticalCsv) {
  ExperimentConfig cfg = small_staging_config();
  std::string first = run_experiment(cfg);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(run_experiment(cfg), first);
}

// Default calibration: the collective wins from a small node count on,
// and keeps widening its lead.
TEST(Scaling, CrossoverWithDefaultConfig) {
  Config cfg = Config::load(std::string(STAGEKIT_CONFIG_DIR) + "/default.cfg");
  ExperimentConfig e = ExperimentConfig::from_config(cfg);
  e.scenario = Scenario::input_end_to_end;
  std::string csv = run_experiment(e);
  auto rows = parse_csv(csv);
  size_t mode_col = column(rows[0], "mode");
  size_t nodes_col = column(rows[0], "nodes");
  size_t total_col = column(rows[0], "input_total_s");
  std::map<int64_t, double> collective, independent;
  for (size_t i = 1; i < rows.size(); ++i) {
    int64_t n = std::stoll(rows[i][nodes_col]);
    double total = std::stod(rows[i][total_col]);
    if (rows[i][mode_col] == "collective") {
      collective[n] = total;
    } else {
      independent[n] = total;
    }
  }
  int64_t crossover = -1;
  for (const auto& [n, ct] : collective) {
    if (ct < independent.at(n)) {
      crossover = n;
      break;
    }
  }
  ASSERT_GT(crossover, 0);
  EXPECT_LE(crossover, 4);
  double prev_ratio = 0;
  for (const auto& [n, ct] : collective) {
    if (n < crossover) continue;
    double ratio = independent.at(n) / ct;
    EXPECT_GE(ratio, prev_ratio - 1e-12) << "n=" << n;
    prev_ratio = ratio;
  }
}

TEST(MakespanScenario, BoundsAndWorkerMonotonicity) {
  Config cfg = Config::parse(R"(
[experiment]
scenario = makespan
seed = 3
nodes = 1
[schedule]
task_count = 300
duration_lo_s = 5
duration_hi_s = 25
workers = 8,16,32
)");
  ExperimentConfig e = ExperimentConfig::from_config(cfg);
  std::string csv = run_experiment(e);
  auto rows = parse_csv(csv);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], parse_csv(std::string(kMakespanCsvHeader) + "\n")[0]);
  size_t lower_col = column(rows[0], "lower_bound_s");
  size_t make_col = column(rows[0], "makespan_s");
  size_t upper_col = column(rows[0], "upper_bound_s");
  double prev = 1e300;
  for (size_t i = 1; i < rows.size(); ++i) {
    double lower = std::stod(rows[i][lower_col]);
    double makespan = std::stod(rows[i][make_col]);
    double upper = std::stod(rows[i][upper_col]);
    EXPECT_GE(makespan, lower - 1e-9);
    EXPECT_LE(makespan, upper + 1e-9);
    EXPECT_LE(makespan, prev + 1e-9);  // non-increasing in workers
    prev = makespan;
  }
}

TEST(MakespanScenario, DurationsRespectRange) {
  ExperimentConfig e = small_staging_config();
  e.tasks.task_count = 1000;
  e.tasks.duration_lo_s = 5;
  e.tasks.duration_hi_s = 160;
  auto durations = makespan_durations(e);
  ASSERT_EQ(durations.size(), 1000u);
  for (double d : durations) {
    EXPECT_GE(d, 5.0);
    EXPECT_LT(d, 160.0);
  }
}

TEST(MapReduceScenario, EmitsOverlapWitnessTrace) {
  Config cfg = Config::load(std::string(STAGEKIT_CONFIG_DIR) + "/mapreduce-demo.cfg");
  ExperimentConfig e = ExperimentConfig::from_config(cfg);
  std::string csv = run_experiment(e);
  auto rows = parse_csv(csv);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"time_s", "rank", "event", "task_id"}));
  double slowest_map_end = 0;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][2] == "task_end" && rows[i][3].rfind("map[", 0) == 0) {
      slowest_map_end = std::max(slowest_map_end, std::stod(rows[i][0]));
    }
  }
  bool witness = false;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][2] == "task_start" && rows[i][3].rfind("merge[", 0) == 0 &&
        std::stod(rows[i][0]) < slowest_map_end) {
      witness = true;
    }
  }
  EXPECT_TRUE(witness);
}

TEST(GridFitScenario, SimPipelineProducesSortedRows) {
  testutil::TempDir tmp;
  Config cfg = Config::load(std::string(STAGEKIT_CONFIG_DIR) + "/grid-fit-demo.cfg");
  cfg.set("grid_fit.row_stop", "12");
  cfg.set("grid_fit.out_file", tmp.path() + "/fit.out");
  ExperimentConfig e = ExperimentConfig::from_config(cfg);
  std::string summary = run_experiment(e, tmp.path());
  EXPECT_NE(summary.find("grid_fit_pipeline,sim,4,4,12"), std::string::npos) << summary;

  std::string fit = testutil::read_file(tmp.path() + "/fit.out");
  auto lines = parse_csv(fit);  // tab-free; one column per line
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0][0], "stagekit-fit v1");
  for (int row = 0; row < 12; ++row) {
    EXPECT_EQ(lines[row + 1][0].rfind(std::to_string(row) + "\t", 0), 0u)
        << lines[row + 1][0];
  }
}

TEST(LocalBackendScaling, RunsAndLeavesOracleBlank) {
  testutil::TempDir tmp;
  ExperimentConfig cfg = small_staging_config();
  cfg.backend = Backend::local;
  cfg.node_counts = {2};
  cfg.dataset.file_count = 3;
  cfg.dataset.total_bytes = 3000;
  std::string csv = run_experiment(cfg, tmp.path());
  auto rows = parse_csv(csv);
  ASSERT_EQ(rows.size(), 3u);
  size_t oracle_col = column(rows[0], "oracle_total_s");
  size_t shared_col = column(rows[0], "bytes_from_shared");
  EXPECT_TRUE(rows[1][oracle_col].empty());
  EXPECT_EQ(rows[1][shared_col], "3000");  // collective row
  EXPECT_EQ(rows[2][shared_col], "6000");  // independent row, 2 nodes
}
