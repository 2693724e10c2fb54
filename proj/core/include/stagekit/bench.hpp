#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stagekit/config.hpp"
#include "stagekit/hookspec.hpp"
#include "stagekit/sharedfs.hpp"
#include "stagekit/staging.hpp"
#include "stagekit/taskflow.hpp"

namespace stagekit::bench {

enum class Scenario {
  staging_scaling,
  input_end_to_end,
  makespan,
  mapreduce_demo,
  grid_fit_pipeline,
};

enum class Backend { sim, local };

Scenario scenario_from_name(const std::string& name);
const char* scenario_name(Scenario s);
Backend backend_from_name(const std::string& name);
const char* backend_name(Backend b);

// Synthetic dataset layout: file_count files named <dir>/file%04d.bin,
// sizes split evenly (remainder spread one byte at a time), staged to
// target_dir by the generated spec `broadcast to <target_dir> { <dir>/*.bin }`.
struct DatasetSpec {
  uint64_t file_count = 1;
  uint64_t total_bytes = 0;
  std::string dir = "data";
  std::string target_dir = "/scratch/inputs";

  std::vector<std::pair<std::string, uint64_t>> files() const;
  std::string spec_text() const;
};

struct TaskModel {
  uint64_t task_count = 0;
  double duration_lo_s = 0;
  double duration_hi_s = 0;
  std::vector<int64_t> workers;
};

struct MapReduceModel {
  int64_t n = 8;
  std::vector<double> map_durations_s;
  double find_duration_s = 0.0;
  double merge_duration_s = 1.0;
  int64_t workers = 8;
};

struct GridFitModel {
  int64_t row_start = 0;
  int64_t row_stop = 0;
  double task_duration_s = 0.0;
  std::vector<std::string> input_globs;  // matched against staged local paths
  std::string out_file = "fit.out";
};

struct ExperimentConfig {
  Scenario scenario = Scenario::staging_scaling;
  Backend backend = Backend::sim;
  std::vector<int64_t> node_counts{1};
  uint32_t agents_per_node = 1;
  uint64_t seed = 1;

  DatasetSpec dataset;
  staging::SimParams params;
  TaskModel tasks;
  MapReduceModel mapreduce;
  GridFitModel grid_fit;

  static ExperimentConfig from_config(const Config& cfg);
  void validate() const;
};

// Closed-form predictions, evaluated without running the simulator. The
// simulator and this oracle share the model formulas but not code paths;
// agreement within 1e-6 per phase is asserted by the test suite.
struct OraclePrediction {
  uint64_t nodes = 0;
  uint64_t total_bytes = 0;
  double staging_s = 0;   // collective: meta + manifest bcast + shared read + ring
  double write_s = 0;
  double read_s = 0;
  double independent_s = 0;
  double collective_total_s() const { return staging_s + write_s; }
  double collective_aggregate_bw() const;
  double independent_aggregate_bw() const;
};

OraclePrediction oracle_predict(const ExperimentConfig& cfg, uint64_t nodes);

// Fresh simulated store populated with the config's dataset; content is
// keyed off the config seed.
std::unique_ptr<sharedfs::SimStore> build_sim_store(const ExperimentConfig& cfg);

// Materializes the dataset as real files (same keyed content stream as
// the simulated store, so digests agree across backends).
void materialize_dataset(const ExperimentConfig& cfg, const std::string& root);

inline constexpr const char* kScalingCsvHeader =
    "scenario,backend,mode,nodes,total_bytes,staging_s,write_s,read_s,input_total_s,"
    "bytes_from_shared,aggregate_bw,oracle_total_s,rel_err";

inline constexpr const char* kMakespanCsvHeader =
    "scenario,backend,workers,task_count,sum_duration_s,max_duration_s,lower_bound_s,"
    "makespan_s,upper_bound_s";

// Runs the configured scenario and returns the primary CSV artifact
// (deterministic under a fixed seed for sim backends). Local-backend
// scenarios place store and cache directories under work_dir.
std::string run_experiment(const ExperimentConfig& cfg, const std::string& work_dir = "");

// Seeded task durations for makespan experiments (uniform in [lo, hi)).
std::vector<double> makespan_durations(const ExperimentConfig& cfg);

}  // namespace stagekit::bench
