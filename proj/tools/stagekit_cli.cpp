// stagekit command line: staging runs, benchmark scenarios, and dataflow
// workloads over the simulated or local multi-agent backend.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "stagekit/bench.hpp"
#include "stagekit/config.hpp"
#include "stagekit/errors.hpp"
#include "stagekit/staging.hpp"
#include "stagekit/taskflow.hpp"

namespace fs = std::filesystem;
using namespace stagekit;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << text;
}

std::string make_temp_dir(const std::string& hint) {
  std::string tmpl = (fs::temp_directory_path() / (hint + ".XXXXXX")).string();
  std::vector<char> buf(tmpl.begin(), tmpl.end());
  buf.push_back('\0');
  if (!mkdtemp(buf.data())) throw Error("mkdtemp failed for " + tmpl);
  return std::string(buf.data());
}

struct StageArgs {
  std::string spec_path;
  uint32_t nodes = 4;
  uint32_t agents = 1;
  std::string mode = "collective";
  std::string backend = "sim";
  std::string cost_path;
  std::string out_path;
  std::string store_dir;
  std::string cache_dir;
  std::string ledger_path;
  std::string addr;
};

int cmd_stage_run(const StageArgs& args) {
  hookspec::StagingSpec spec = hookspec::parse_spec(slurp(args.spec_path));

  Config cfg;
  if (!args.cost_path.empty()) cfg = Config::load(args.cost_path);
  cfg.set("experiment.scenario", "staging_scaling");
  cfg.set("experiment.nodes", std::to_string(args.nodes));
  cfg.set("experiment.agents_per_node", std::to_string(args.agents));
  bench::ExperimentConfig ecfg = bench::ExperimentConfig::from_config(cfg);

  fabric::Topology topo = fabric::build_topology(args.nodes, args.agents);
  bool collective = args.mode == "collective";
  if (!collective && args.mode != "independent") {
    throw Error("mode must be collective or independent");
  }

  staging::StagingReport report;
  sharedfs::SharedStore* store = nullptr;
  std::unique_ptr<sharedfs::SimStore> sim_store;
  std::unique_ptr<sharedfs::RealStore> real_store;

  if (args.backend == "sim") {
    sim_store = bench::build_sim_store(ecfg);
    store = sim_store.get();
    staging::SimNodeCaches caches(topo.nodes);
    report = collective ? staging::stage_collective_sim(spec, topo, *sim_store, ecfg.params,
                                                        caches)
                        : staging::stage_independent_sim(spec, topo, *sim_store, ecfg.params);
  } else if (args.backend == "local") {
    if (args.store_dir.empty()) throw Error("--backend local requires --store DIR");
    real_store = std::make_unique<sharedfs::RealStore>(args.store_dir);
    store = real_store.get();
    std::string cache_dir =
        args.cache_dir.empty() ? make_temp_dir("stagekit-cache") : args.cache_dir;
    staging::RealNodeCaches caches(cache_dir, topo.nodes);
    staging::LocalStagingOptions opts;
    opts.fabric.addr = args.addr;
    report = collective
                 ? staging::stage_collective_local(spec, topo, *real_store, caches, opts)
                 : staging::stage_independent_local(spec, topo, *real_store, opts);
  } else {
    throw Error("backend must be sim or local");
  }

  std::string csv = staging::StagingReport::csv_header() + "\n" + report.csv_row() + "\n";
  std::cout << csv;
  if (!args.out_path.empty()) write_file(args.out_path, csv);
  if (!args.ledger_path.empty()) write_file(args.ledger_path, store->ledger().to_csv());
  return 0;
}

struct BenchArgs {
  std::string config_path;
  std::string out_path;
  std::string work_dir;
};

int cmd_bench(const std::string& scenario, const BenchArgs& args) {
  Config cfg = Config::load(args.config_path);
  cfg.set("experiment.scenario", scenario);
  bench::ExperimentConfig ecfg = bench::ExperimentConfig::from_config(cfg);
  std::string work = args.work_dir;
  if (work.empty() && ecfg.backend == bench::Backend::local) {
    work = make_temp_dir("stagekit-bench");
  }
  std::string csv = bench::run_experiment(ecfg, work);
  if (args.out_path.empty()) {
    std::cout << csv;
  } else {
    write_file(args.out_path, csv);
  }
  return 0;
}

struct FlowMapReduceArgs {
  int64_t n = 8;
  std::vector<double> map_durations;
  double merge_duration = 1.0;
  int64_t workers = 8;
  std::string backend = "sim";
  std::string out_path;
  std::string trace_path;
  std::string addr;
};

int cmd_flow_mapreduce(const FlowMapReduceArgs& args) {
  taskflow::TaskRegistry registry = taskflow::TaskRegistry::with_builtins();
  taskflow::WorkloadEnv env;
  env.topo = fabric::build_topology(static_cast<uint32_t>(args.workers), 1);

  taskflow::MapReduceSpec mr;
  mr.n = args.n;
  mr.map_durations_s = args.map_durations;
  mr.merge_duration_s = args.merge_duration;
  mr.out_path = args.out_path;

  std::unique_ptr<taskflow::Engine> eng;
  if (args.backend == "sim") {
    eng = std::make_unique<taskflow::SimEngine>(env, registry);
  } else if (args.backend == "local") {
    fabric::LocalFabricOptions opts;
    opts.addr = args.addr;
    eng = std::make_unique<taskflow::LocalEngine>(env, registry, opts);
  } else {
    throw Error("backend must be sim or local");
  }
  Bytes final_value = taskflow::run_map_reduce(*eng, mr);
  if (args.out_path.empty()) {
    std::cout << to_string(final_value);
  }
  if (!args.trace_path.empty()) {
    write_file(args.trace_path, eng->trace().to_csv());
  }
  return 0;
}

struct FlowGridFitArgs {
  std::string params_path;
  std::string out_path;
  int64_t start = -1;
  int64_t stop = -1;
  std::string work_dir;
};

int cmd_flow_grid_fit(const FlowGridFitArgs& args) {
  Config cfg = Config::load(args.params_path);
  cfg.set("experiment.scenario", "grid_fit_pipeline");
  if (args.start >= 0) cfg.set("grid_fit.row_start", std::to_string(args.start));
  if (args.stop >= 0) cfg.set("grid_fit.row_stop", std::to_string(args.stop));
  if (!args.out_path.empty()) cfg.set("grid_fit.out_file", args.out_path);
  bench::ExperimentConfig ecfg = bench::ExperimentConfig::from_config(cfg);
  std::string work = args.work_dir;
  if (work.empty() && ecfg.backend == bench::Backend::local) {
    work = make_temp_dir("stagekit-flow");
  }
  std::string summary = bench::run_experiment(ecfg, work);
  std::cout << summary;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stagekit: collective data staging and many-task dataflow toolkit"};
  app.require_subcommand(1);

  // ---- stage ----
  auto* stage = app.add_subcommand("stage", "staging runs against a shared store");
  stage->require_subcommand(1);
  auto* stage_run = stage->add_subcommand("run", "run one staging experiment");
  StageArgs sargs;
  stage_run->add_option("--spec", sargs.spec_path, "staging spec file")->required();
  stage_run->add_option("--nodes", sargs.nodes, "node count")->check(CLI::PositiveNumber);
  stage_run->add_option("--agents", sargs.agents, "agents per node")
      ->check(CLI::PositiveNumber);
  stage_run->add_option("--mode", sargs.mode, "collective|independent");
  stage_run->add_option("--backend", sargs.backend, "sim|local");
  stage_run->add_option("--cost", sargs.cost_path, "cost/config file");
  stage_run->add_option("--out", sargs.out_path, "write report CSV here");
  stage_run->add_option("--store", sargs.store_dir, "shared store directory (local backend)");
  stage_run->add_option("--cache", sargs.cache_dir, "node cache root (local backend)");
  stage_run->add_option("--ledger", sargs.ledger_path, "write I/O ledger CSV here");
  stage_run->add_option("--addr", sargs.addr,
                        "fabric rendezvous host:port (or $STAGEKIT_FABRIC_ADDR)");

  // ---- bench ----
  auto* bench_cmd = app.add_subcommand("bench", "experiment scenarios");
  bench_cmd->require_subcommand(1);
  BenchArgs bargs;
  std::vector<std::pair<std::string, std::string>> scenarios = {
      {"staging-scaling", "staging time vs node count, collective vs independent"},
      {"input-end-to-end", "staging plus application read phase"},
      {"makespan", "many-task makespan across worker counts"},
      {"mapreduce-demo", "barrier-free mapreduce event trace"},
      {"grid-fit", "staging plus grid-fit pipeline"},
  };
  std::vector<CLI::App*> bench_subs;
  for (const auto& [name, desc] : scenarios) {
    auto* sub = bench_cmd->add_subcommand(name, desc);
    sub->add_option("--config", bargs.config_path, "experiment config file")->required();
    sub->add_option("--out", bargs.out_path, "output CSV path (stdout if omitted)");
    sub->add_option("--work", bargs.work_dir, "work directory for local-backend artifacts");
    bench_subs.push_back(sub);
  }

  // ---- flow ----
  auto* flow = app.add_subcommand("flow", "dataflow workloads");
  flow->require_subcommand(1);
  auto* flow_mr = flow->add_subcommand("mapreduce", "find/map/merge-tree pipeline");
  FlowMapReduceArgs margs;
  flow_mr->add_option("--n", margs.n, "number of map slots")->check(CLI::PositiveNumber);
  flow_mr->add_option("--map-durations", margs.map_durations,
                      "simulated map durations (comma separated)")
      ->delimiter(',');
  flow_mr->add_option("--merge-duration", margs.merge_duration, "simulated merge duration");
  flow_mr->add_option("--workers", margs.workers, "worker count")->check(CLI::PositiveNumber);
  flow_mr->add_option("--backend", margs.backend, "sim|local");
  flow_mr->add_option("--out", margs.out_path, "write final merged value here");
  flow_mr->add_option("--trace", margs.trace_path, "write event trace CSV here");
  flow_mr->add_option("--addr", margs.addr, "fabric rendezvous host:port");

  auto* flow_gf = flow->add_subcommand("grid-fit", "stage inputs then fit grid rows");
  FlowGridFitArgs gargs;
  flow_gf->add_option("--params", gargs.params_path, "parameter/config file")->required();
  flow_gf->add_option("--out", gargs.out_path, "microstructure output file");
  flow_gf->add_option("--start", gargs.start, "first row");
  flow_gf->add_option("--stop", gargs.stop, "one past last row");
  flow_gf->add_option("--work", gargs.work_dir, "work directory for local-backend artifacts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (stage_run->parsed()) return cmd_stage_run(sargs);
    for (size_t i = 0; i < bench_subs.size(); ++i) {
      if (bench_subs[i]->parsed()) {
        std::string scenario = scenarios[i].first;
        return cmd_bench(scenario, bargs);
      }
    }
    if (flow_mr->parsed()) return cmd_flow_mapreduce(margs);
    if (flow_gf->parsed()) return cmd_flow_grid_fit(gargs);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
