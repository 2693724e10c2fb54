#include "stagekit/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stagekit/csv.hpp"
#include "stagekit/errors.hpp"
#include "stagekit/rng.hpp"

namespace fs = std::filesystem;

namespace stagekit::bench {

Scenario scenario_from_name(const std::string& name) {
  if (name == "staging_scaling" || name == "staging-scaling") return Scenario::staging_scaling;
  if (name == "input_end_to_end" || name == "input-end-to-end") return Scenario::input_end_to_end;
  if (name == "makespan") return Scenario::makespan;
  if (name == "mapreduce_demo" || name == "mapreduce-demo") return Scenario::mapreduce_demo;
  if (name == "grid_fit_pipeline" || name == "grid-fit") return Scenario::grid_fit_pipeline;
  throw ConfigError("unknown scenario: '" + name + "'");
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::staging_scaling: return "staging_scaling";
    case Scenario::input_end_to_end: return "input_end_to_end";
    case Scenario::makespan: return "makespan";
    case Scenario::mapreduce_demo: return "mapreduce_demo";
    case Scenario::grid_fit_pipeline: return "grid_fit_pipeline";
  }
  return "?";
}

Backend backend_from_name(const std::string& name) {
  if (name == "sim") return Backend::sim;
  if (name == "local") return Backend::local;
  throw ConfigError("unknown backend: '" + name + "' (expected sim or local)");
}

const char* backend_name(Backend b) { return b == Backend::sim ? "sim" : "local"; }

std::vector<std::pair<std::string, uint64_t>> DatasetSpec::files() const {
  std::vector<std::pair<std::string, uint64_t>> out;
  uint64_t base = total_bytes / file_count;
  uint64_t rem = total_bytes % file_count;
  for (uint64_t i = 0; i < file_count; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "file%04llu.bin", static_cast<unsigned long long>(i));
    out.emplace_back(dir + "/" + name, base + (i < rem ? 1 : 0));
  }
  return out;
}

std::string DatasetSpec::spec_text() const {
  return "broadcast to " + target_dir + " {\n  " + dir + "/*.bin\n}\n";
}

ExperimentConfig ExperimentConfig::from_config(const Config& cfg) {
  ExperimentConfig e;
  e.scenario = scenario_from_name(cfg.get_string("experiment.scenario"));
  e.backend = backend_from_name(cfg.get_string("experiment.backend", "sim"));
  if (cfg.has("experiment.nodes")) e.node_counts = cfg.get_int_list("experiment.nodes");
  e.agents_per_node = static_cast<uint32_t>(cfg.get_int("experiment.agents_per_node", 1));
  e.seed = static_cast<uint64_t>(cfg.get_int("experiment.seed", 1));

  e.dataset.file_count = static_cast<uint64_t>(cfg.get_int("dataset.file_count", 1));
  e.dataset.total_bytes = static_cast<uint64_t>(cfg.get_int("dataset.total_bytes", 0));
  e.dataset.dir = cfg.get_string("dataset.dir", "data");
  e.dataset.target_dir = cfg.get_string("dataset.target_dir", "/scratch/inputs");

  e.params.cost.b_fs_bytes_per_s = cfg.get_double("cost.b_fs_bytes_per_s", 1e9);
  e.params.cost.r_meta_ops_per_s = cfg.get_double("cost.r_meta_ops_per_s", 1e6);
  e.params.cost.l_meta_s = cfg.get_double("cost.l_meta_s", 0.0);
  e.params.cost.gamma = cfg.get_double("cost.gamma", 0.0);
  e.params.net.b_net_bytes_per_s = cfg.get_double("net.b_net_bytes_per_s", 10e9);
  e.params.net.alpha_s = cfg.get_double("net.alpha_s", 0.0);
  e.params.net.chunk_bytes = static_cast<uint64_t>(cfg.get_int("net.chunk_bytes", 4 << 20));
  e.params.b_local_bytes_per_s = cfg.get_double("cache.b_local_bytes_per_s", 1e9);
  e.params.b_lr_bytes_per_s = cfg.get_double("cache.b_lr_bytes_per_s", 1e9);

  e.tasks.task_count = static_cast<uint64_t>(cfg.get_int("schedule.task_count", 0));
  e.tasks.duration_lo_s = cfg.get_double("schedule.duration_lo_s", 0.0);
  e.tasks.duration_hi_s = cfg.get_double("schedule.duration_hi_s", 0.0);
  if (cfg.has("schedule.workers")) e.tasks.workers = cfg.get_int_list("schedule.workers");

  e.mapreduce.n = cfg.get_int("mapreduce.n", 8);
  if (cfg.has("mapreduce.map_durations_s")) {
    e.mapreduce.map_durations_s = cfg.get_double_list("mapreduce.map_durations_s");
  }
  e.mapreduce.find_duration_s = cfg.get_double("mapreduce.find_duration_s", 0.0);
  e.mapreduce.merge_duration_s = cfg.get_double("mapreduce.merge_duration_s", 1.0);
  e.mapreduce.workers = cfg.get_int("mapreduce.workers", 8);

  e.grid_fit.row_start = cfg.get_int("grid_fit.row_start", 0);
  e.grid_fit.row_stop = cfg.get_int("grid_fit.row_stop", 0);
  e.grid_fit.task_duration_s = cfg.get_double("grid_fit.task_duration_s", 0.0);
  if (cfg.has("grid_fit.inputs")) {
    std::string joined = cfg.get_string("grid_fit.inputs");
    std::string cur;
    for (char c : joined) {
      if (c == ',') {
        if (!cur.empty()) e.grid_fit.input_globs.push_back(cur);
        cur.clear();
      } else if (c != ' ') {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) e.grid_fit.input_globs.push_back(cur);
  }
  e.grid_fit.out_file = cfg.get_string("grid_fit.out_file", "fit.out");

  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  if (node_counts.empty()) throw ConfigError("experiment.nodes must be non-empty");
  int64_t prev = 0;
  for (int64_t n : node_counts) {
    if (n <= 0) throw ConfigError("node counts must be positive");
    if (n <= prev) throw ConfigError("node counts must be strictly ascending");
    prev = n;
  }
  if (agents_per_node == 0) throw ConfigError("agents_per_node must be positive");
  if (dataset.file_count == 0) throw ConfigError("dataset.file_count must be positive");
  if (tasks.duration_lo_s > tasks.duration_hi_s) {
    throw ConfigError("schedule duration_lo_s must be <= duration_hi_s");
  }
  if (params.cost.b_fs_bytes_per_s <= 0 || params.cost.r_meta_ops_per_s <= 0 ||
      params.cost.l_meta_s < 0 || params.cost.gamma < 0) {
    throw ConfigError("cost model parameters out of range");
  }
  if (params.net.b_net_bytes_per_s <= 0 || params.net.alpha_s < 0 ||
      params.net.chunk_bytes == 0) {
    throw ConfigError("net model parameters out of range");
  }
  if (params.b_local_bytes_per_s <= 0 || params.b_lr_bytes_per_s <= 0) {
    throw ConfigError("cache bandwidth parameters out of range");
  }
}

std::unique_ptr<sharedfs::SimStore> build_sim_store(const ExperimentConfig& cfg) {
  auto store = std::make_unique<sharedfs::SimStore>(cfg.seed);
  for (const auto& [path, size] : cfg.dataset.files()) store->add_file(path, size);
  return store;
}

void materialize_dataset(const ExperimentConfig& cfg, const std::string& root) {
  sharedfs::SimStore reference(cfg.seed);
  for (const auto& [path, size] : cfg.dataset.files()) {
    reference.add_file(path, size);
    fs::path full = fs::path(root) / path;
    fs::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write dataset file: " + full.string());
    uint64_t off = 0;
    std::vector<char> buf(1 << 20);
    while (off < size) {
      uint64_t n = std::min<uint64_t>(buf.size(), size - off);
      Bytes chunk = reference.peek_content(path, off, n);
      out.write(reinterpret_cast<const char*>(chunk.data()), static_cast<std::streamsize>(n));
      off += n;
    }
  }
}

double OraclePrediction::collective_aggregate_bw() const {
  double t = collective_total_s();
  if (t <= 0) return 0;
  return static_cast<double>(nodes) * static_cast<double>(total_bytes) / t;
}

double OraclePrediction::independent_aggregate_bw() const {
  if (independent_s <= 0) return 0;
  return static_cast<double>(nodes) * static_cast<double>(total_bytes) / independent_s;
}

OraclePrediction oracle_predict(const ExperimentConfig& cfg, uint64_t nodes) {
  // Resolve against a scratch store to learn manifest geometry; the time
  // math below is closed-form only.
  auto store = build_sim_store(cfg);
  hookspec::StagingSpec spec = hookspec::parse_spec(cfg.dataset.spec_text());
  hookspec::ResolveStats rs;
  hookspec::FileManifest manifest = hookspec::resolve_manifest(spec, *store, 0, &rs);
  uint64_t enc_size = hookspec::encode_manifest(manifest).size();

  const sharedfs::CostModel& cost = cfg.params.cost;
  const fabric::NetModel& net = cfg.params.net;

  OraclePrediction p;
  p.nodes = nodes;
  p.total_bytes = manifest.total_bytes;

  double meta_collective =
      cost.charge_meta_resolve(1, rs.patterns, rs.total_matches, rs.stat_probes);
  double bcast = net.bcast_seconds(nodes, enc_size);
  double shared_read = cost.charge_concurrent_read_total(
      nodes, static_cast<double>(manifest.total_bytes));
  double ring = 0;
  for (const auto& e : manifest.entries) {
    uint64_t max_chunk = (e.size + nodes - 1) / nodes;
    ring += net.allgather_seconds(nodes, max_chunk);
  }
  p.staging_s = meta_collective + bcast + shared_read + ring;
  p.write_s = static_cast<double>(manifest.total_bytes) / cfg.params.b_local_bytes_per_s;
  p.read_s = static_cast<double>(manifest.total_bytes) / cfg.params.b_lr_bytes_per_s;

  double meta_independent =
      cost.charge_meta_resolve(nodes, rs.patterns, rs.total_matches, rs.stat_probes);
  p.independent_s = meta_independent +
                    cost.charge_concurrent_read_total(
                        nodes, static_cast<double>(nodes) *
                                   static_cast<double>(manifest.total_bytes));
  return p;
}

std::vector<double> makespan_durations(const ExperimentConfig& cfg) {
  Rng rng(mix64(cfg.seed ^ 0x6d616b65ULL));
  std::vector<double> durations(cfg.tasks.task_count);
  for (double& d : durations) {
    d = rng.next_double(cfg.tasks.duration_lo_s, cfg.tasks.duration_hi_s);
  }
  return durations;
}

namespace {

struct ScalingRow {
  const ExperimentConfig* cfg;
  staging::Mode mode;
  staging::StagingReport report;
  double oracle_total = 0;
  bool has_oracle = false;

  std::string to_csv() const {
    std::ostringstream out;
    out << scenario_name(cfg->scenario) << ',' << backend_name(cfg->backend) << ','
        << staging::mode_name(mode) << ',' << report.nodes << ',' << report.total_bytes << ','
        << fmt_g(report.staging_s) << ',' << fmt_g(report.write_s) << ','
        << fmt_g(report.read_s) << ',' << fmt_g(report.input_total_s()) << ','
        << report.bytes_from_shared << ',' << fmt_g(report.aggregate_bw()) << ',';
    if (has_oracle) {
      double rel = oracle_total > 0
                       ? std::abs(report.input_total_s() - oracle_total) / oracle_total
                       : 0.0;
      out << fmt_g(oracle_total) << ',' << fmt_g(rel);
    } else {
      out << ',';
    }
    return out.str();
  }
};

std::string run_scaling(const ExperimentConfig& cfg, const std::string& work_dir) {
  bool end_to_end = cfg.scenario == Scenario::input_end_to_end;
  std::ostringstream out;
  out << kScalingCsvHeader << '\n';

  hookspec::StagingSpec spec = hookspec::parse_spec(cfg.dataset.spec_text());

  for (int64_t n : cfg.node_counts) {
    fabric::Topology topo = fabric::build_topology(static_cast<uint32_t>(n),
                                                   cfg.agents_per_node);
    OraclePrediction oracle = oracle_predict(cfg, static_cast<uint64_t>(n));

    if (cfg.backend == Backend::sim) {
      auto store = build_sim_store(cfg);

      staging::SimNodeCaches caches(topo.nodes);
      hookspec::FileManifest manifest;
      ScalingRow collective{&cfg, staging::Mode::collective, {}, 0, true};
      collective.report =
          staging::stage_collective_sim(spec, topo, *store, cfg.params, caches, &manifest);
      collective.oracle_total = oracle.collective_total_s();
      if (end_to_end) {
        staging::ReadReport rr = staging::read_phase_sim(manifest, caches, 0, cfg.params);
        collective.report.read_s = rr.read_s;
        collective.oracle_total = oracle.collective_total_s() + oracle.read_s;
      }
      out << collective.to_csv() << '\n';

      ScalingRow independent{&cfg, staging::Mode::independent, {}, oracle.independent_s, true};
      independent.report = staging::stage_independent_sim(spec, topo, *store, cfg.params);
      out << independent.to_csv() << '\n';
    } else {
      if (work_dir.empty()) throw ConfigError("local backend needs a work directory");
      std::string store_dir = work_dir + "/store";
      if (!fs::exists(store_dir)) {
        fs::create_directories(store_dir);
        materialize_dataset(cfg, store_dir);
      }
      sharedfs::RealStore store(store_dir);
      staging::LocalStagingOptions opts;

      std::string cache_dir = work_dir + "/cache_n" + std::to_string(n);
      staging::RealNodeCaches caches(cache_dir, topo.nodes);
      hookspec::FileManifest manifest;
      ScalingRow collective{&cfg, staging::Mode::collective, {}, 0, false};
      collective.report =
          staging::stage_collective_local(spec, topo, store, caches, opts, &manifest);
      if (end_to_end) {
        staging::ReadReport rr = staging::read_phase_local(manifest, caches, 0);
        collective.report.read_s = rr.read_s;
      }
      out << collective.to_csv() << '\n';

      ScalingRow independent{&cfg, staging::Mode::independent, {}, 0, false};
      independent.report = staging::stage_independent_local(spec, topo, store, opts);
      out << independent.to_csv() << '\n';
    }
  }
  return out.str();
}

std::string run_makespan(const ExperimentConfig& cfg) {
  if (cfg.tasks.task_count == 0) throw ConfigError("makespan scenario needs schedule.task_count");
  if (cfg.tasks.workers.empty()) throw ConfigError("makespan scenario needs schedule.workers");
  std::vector<double> durations = makespan_durations(cfg);
  double sum = 0, maxd = 0;
  for (double d : durations) {
    sum += d;
    maxd = std::max(maxd, d);
  }

  taskflow::TaskRegistry registry;
  registry.add("unit", [](taskflow::TaskCtx&) { return Bytes{}; });

  std::ostringstream out;
  out << kMakespanCsvHeader << '\n';
  for (int64_t w : cfg.tasks.workers) {
    if (w <= 0) throw ConfigError("worker counts must be positive");
    taskflow::WorkloadEnv env;
    env.topo = fabric::build_topology(static_cast<uint32_t>(w), 1);
    taskflow::SimEngine eng(env, registry);
    for (uint64_t i = 0; i < cfg.tasks.task_count; ++i) {
      taskflow::TaskSpec t;
      t.kind = "unit";
      t.label = "task[" + std::to_string(i) + "]";
      t.est_duration_s = durations[i];
      eng.submit(std::move(t));
    }
    eng.run();
    double makespan = eng.trace().makespan();
    double lower = std::max(sum / static_cast<double>(w), maxd);
    double upper = sum / static_cast<double>(w) + maxd;
    out << scenario_name(cfg.scenario) << ',' << backend_name(cfg.backend) << ',' << w << ','
        << cfg.tasks.task_count << ',' << fmt_g(sum) << ',' << fmt_g(maxd) << ','
        << fmt_g(lower) << ',' << fmt_g(makespan) << ',' << fmt_g(upper) << '\n';
  }
  return out.str();
}

std::string run_mapreduce_demo(const ExperimentConfig& cfg) {
  taskflow::TaskRegistry registry = taskflow::TaskRegistry::with_builtins();
  taskflow::WorkloadEnv env;
  env.topo = fabric::build_topology(static_cast<uint32_t>(cfg.mapreduce.workers), 1);
  taskflow::SimEngine eng(env, registry);
  taskflow::MapReduceSpec mr;
  mr.n = cfg.mapreduce.n;
  mr.map_durations_s = cfg.mapreduce.map_durations_s;
  mr.find_duration_s = cfg.mapreduce.find_duration_s;
  mr.merge_duration_s = cfg.mapreduce.merge_duration_s;
  taskflow::run_map_reduce(eng, mr);
  return eng.trace().to_csv();
}

std::vector<std::string> expand_grid_fit_inputs(const ExperimentConfig& cfg,
                                                const hookspec::FileManifest& manifest) {
  std::vector<std::string> staged;
  for (const auto& e : manifest.entries) staged.push_back(staging::staged_rel_path(e));
  std::sort(staged.begin(), staged.end());
  std::vector<std::string> globs = cfg.grid_fit.input_globs;
  if (globs.empty()) globs.push_back("*");  // everything staged
  std::vector<std::string> out;
  for (const std::string& g : globs) {
    bool any = false;
    for (const std::string& path : staged) {
      if (sharedfs::glob_match(g, path)) {
        out.push_back(path);
        any = true;
      }
    }
    if (!any) throw ConfigError("grid_fit input pattern matched nothing: '" + g + "'");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string run_grid_fit_pipeline(const ExperimentConfig& cfg, const std::string& work_dir) {
  int64_t n = cfg.node_counts.front();
  fabric::Topology topo =
      fabric::build_topology(static_cast<uint32_t>(n), cfg.agents_per_node);
  hookspec::StagingSpec spec = hookspec::parse_spec(cfg.dataset.spec_text());

  taskflow::TaskRegistry registry = taskflow::TaskRegistry::with_builtins();
  taskflow::WorkloadEnv env;
  env.topo = topo;

  hookspec::FileManifest manifest;
  staging::StagingReport stage_report;
  std::unique_ptr<taskflow::LocalInputReader> reader;
  std::unique_ptr<sharedfs::SimStore> sim_store;
  std::unique_ptr<staging::SimNodeCaches> sim_caches;
  std::unique_ptr<staging::RealNodeCaches> real_caches;

  if (cfg.backend == Backend::sim) {
    sim_store = build_sim_store(cfg);
    sim_caches = std::make_unique<staging::SimNodeCaches>(topo.nodes);
    stage_report = staging::stage_collective_sim(spec, topo, *sim_store, cfg.params,
                                                 *sim_caches, &manifest);
    reader = std::make_unique<taskflow::SimInputReader>(*sim_caches, *sim_store,
                                                        cfg.params.b_lr_bytes_per_s);
  } else {
    if (work_dir.empty()) throw ConfigError("local backend needs a work directory");
    std::string store_dir = work_dir + "/store";
    if (!fs::exists(store_dir)) {
      fs::create_directories(store_dir);
      materialize_dataset(cfg, store_dir);
    }
    sharedfs::RealStore store(store_dir);
    real_caches = std::make_unique<staging::RealNodeCaches>(work_dir + "/cache", topo.nodes);
    staging::LocalStagingOptions opts;
    stage_report =
        staging::stage_collective_local(spec, topo, store, *real_caches, opts, &manifest);
    reader = std::make_unique<taskflow::RealInputReader>(*real_caches, manifest);
  }
  env.reader = reader.get();

  taskflow::GridFitSpec gf;
  gf.input_rel_paths = expand_grid_fit_inputs(cfg, manifest);
  gf.row_start = cfg.grid_fit.row_start;
  gf.row_stop = cfg.grid_fit.row_stop;
  gf.task_duration_s = cfg.grid_fit.task_duration_s;
  gf.out_path = cfg.grid_fit.out_file;

  double makespan = 0;
  if (cfg.backend == Backend::sim) {
    taskflow::SimEngine eng(env, registry);
    taskflow::run_grid_fit(eng, gf);
    makespan = eng.trace().makespan();
  } else {
    taskflow::LocalEngine eng(env, registry);
    taskflow::run_grid_fit(eng, gf);
    makespan = eng.trace().makespan();
  }

  std::ostringstream out;
  out << "scenario,backend,nodes,agents_per_node,rows,staging_s,write_s,makespan_s,out_file\n";
  out << scenario_name(cfg.scenario) << ',' << backend_name(cfg.backend) << ',' << topo.nodes
      << ',' << topo.agents_per_node << ',' << (gf.row_stop - gf.row_start) << ','
      << fmt_g(stage_report.staging_s) << ',' << fmt_g(stage_report.write_s) << ','
      << fmt_g(makespan) << ',' << gf.out_path << '\n';
  return out.str();
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg, const std::string& work_dir) {
  cfg.validate();
  switch (cfg.scenario) {
    case Scenario::staging_scaling:
    case Scenario::input_end_to_end:
      return run_scaling(cfg, work_dir);
    case Scenario::makespan:
      return run_makespan(cfg);
    case Scenario::mapreduce_demo:
      return run_mapreduce_demo(cfg);
    case Scenario::grid_fit_pipeline:
      return run_grid_fit_pipeline(cfg, work_dir);
  }
  throw ConfigError("unhandled scenario");
}

}  // namespace stagekit::bench
