// Acceptance suite: exercises every shipped guarantee end to end and
// prints one pass/fail line per criterion. Exit status is nonzero if any
// criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stagekit/bench.hpp"
#include "stagekit/config.hpp"
#include "stagekit/rng.hpp"
#include "stagekit/staging.hpp"
#include "stagekit/taskflow.hpp"

using namespace stagekit;

namespace {

int g_pass = 0;
int g_fail = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
  std::printf("[%s] %-12s %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  (ok ? g_pass : g_fail)++;
}

bool within(double value, double target, double rel_tol) {
  return std::abs(value - target) <= rel_tol * std::abs(target);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Config load_config(const std::string& name) {
  return Config::load(std::string(STAGEKIT_CONFIG_DIR) + "/" + name);
}

// Ledger CSV -> set of ranks with nonzero glob_ops (criterion 3 is
// explicitly about the exported CSV, not in-memory counters).
std::vector<uint64_t> glob_ranks_from_csv(const std::string& csv) {
  std::vector<uint64_t> ranks;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
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
    if (fields.size() >= 4 && std::stoull(fields[3]) > 0) {
      ranks.push_back(std::stoull(fields[0]));
    }
  }
  return ranks;
}

struct TempDir {
  std::string path;
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "stagekit-accept.XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// ---------------------------------------------------------------------
// 1. Calibrated reproduction at 8192 nodes x 16 agents, 577 MB dataset.
void criterion1() {
  bench::ExperimentConfig cfg =
      bench::ExperimentConfig::from_config(load_config("calibration-8192.cfg"));
  hookspec::StagingSpec spec = hookspec::parse_spec(cfg.dataset.spec_text());
  fabric::Topology topo = fabric::build_topology(8192, 16);
  auto store = bench::build_sim_store(cfg);

  staging::SimNodeCaches caches(8192);
  hookspec::FileManifest manifest;
  staging::StagingReport collective =
      staging::stage_collective_sim(spec, topo, *store, cfg.params, caches, &manifest);
  staging::ReadReport read = staging::read_phase_sim(manifest, caches, 0, cfg.params);
  staging::StagingReport independent =
      staging::stage_independent_sim(spec, topo, *store, cfg.params);

  double ind_bw = independent.aggregate_bw();
  report("1a", within(ind_bw, 21e9, 0.10),
         "independent aggregate input bandwidth " + fmt(ind_bw / 1e9) +
             " GB/s (target 21 +/- 10%)");

  double coll_bw = collective.aggregate_bw();
  report("1b", within(coll_bw, 101e9, 0.10),
         "collective aggregate bandwidth " + fmt(coll_bw / 1e9) +
             " GB/s (target 101 +/- 10%)");

  double sw = collective.staging_s + collective.write_s;
  double ratio = independent.staging_s / sw;
  bool c_ok = within(sw, 46.75, 0.10) && std::abs(ratio - 4.7) <= 0.5;
  report("1c", c_ok,
         "staging+write " + fmt(sw) + " s (target 46.75 +/- 10%), input-time ratio " +
             fmt(ratio) + " (target 4.7 +/- 0.5)");

  // read phase pinned at 10.8 s and invariant under node count
  fabric::Topology topo_small = fabric::build_topology(1024, 16);
  staging::SimNodeCaches caches_small(1024);
  hookspec::FileManifest manifest_small;
  staging::stage_collective_sim(spec, topo_small, *store, cfg.params, caches_small,
                                &manifest_small);
  staging::ReadReport read_small =
      staging::read_phase_sim(manifest_small, caches_small, 0, cfg.params);
  bool d_ok = within(read.read_s, 10.8, 0.02) && read.read_s == read_small.read_s;
  report("1d", d_ok,
         "read phase " + fmt(read.read_s) + " s at 8192 nodes, " + fmt(read_small.read_s) +
             " s at 1024 nodes (target 10.8 +/- 2%, node-count invariant)");

  // simulator vs closed-form oracle, per phase, <= 1e-6 relative
  bench::OraclePrediction oracle = bench::oracle_predict(cfg, 8192);
  auto rel = [](double sim, double pred) {
    return pred == 0 ? std::abs(sim) : std::abs(sim - pred) / std::abs(pred);
  };
  double worst = std::max({rel(collective.staging_s, oracle.staging_s),
                           rel(collective.write_s, oracle.write_s),
                           rel(read.read_s, oracle.read_s),
                           rel(independent.staging_s, oracle.independent_s)});
  report("1e", worst <= 1e-6,
         "sim vs oracle worst relative error " + fmt(worst) + " (bound 1e-6)");
}

// ---------------------------------------------------------------------
// 2. Shared-traffic property over random manifests.
void criterion2() {
  bool ok = true;
  std::string detail;
  for (uint32_t n : {1u, 2u, 4u, 8u, 16u}) {
    Rng rng(mix64(n * 1315423911ull));
    sharedfs::SimStore store(n + 1);
    uint64_t files = 1 + rng.next_below(64);
    uint64_t total = 0;
    for (uint64_t i = 0; i < files; ++i) {
      uint64_t size = rng.next_below((16ull << 20) / files + 1);
      char name[32];
      std::snprintf(name, sizeof name, "in/f%03llu", static_cast<unsigned long long>(i));
      store.add_file(name, size);
      total += size;
    }
    auto spec = hookspec::parse_spec("broadcast to /c {\n in/*\n}\n");
    staging::SimParams params;
    fabric::Topology topo = fabric::build_topology(n, 1);
    staging::SimNodeCaches caches(n);
    staging::StagingReport c =
        staging::stage_collective_sim(spec, topo, store, params, caches);
    staging::StagingReport i = staging::stage_independent_sim(spec, topo, store, params);
    bool coll_ok =
        c.bytes_from_shared >= total && c.bytes_from_shared <= total + n;
    bool ind_ok = i.bytes_from_shared == static_cast<uint64_t>(n) * total;
    if (!coll_ok || !ind_ok) {
      ok = false;
      detail += " n=" + std::to_string(n) + " collective=" +
                std::to_string(c.bytes_from_shared) + "/" + std::to_string(total) +
                " independent=" + std::to_string(i.bytes_from_shared);
    }
  }
  report("2", ok,
         ok ? "collective shared bytes == dataset size, independent == n x dataset size "
              "for n in {1,2,4,8,16}"
            : detail);
}

// ---------------------------------------------------------------------
// 3. Single-glob property, verified from exported ledger CSV.
void criterion3() {
  uint32_t n = 8;
  auto ds_spec = hookspec::parse_spec("broadcast to /c {\n in/*\n}\n");
  staging::SimParams params;
  fabric::Topology topo = fabric::build_topology(n, 2);

  sharedfs::SimStore store(77);
  for (int i = 0; i < 5; ++i) store.add_file("in/f" + std::to_string(i), 1000);
  staging::SimNodeCaches caches(n);
  staging::stage_collective_sim(ds_spec, topo, store, params, caches);
  std::vector<uint64_t> collective_ranks = glob_ranks_from_csv(store.ledger().to_csv());

  store.ledger().reset();
  staging::stage_independent_sim(ds_spec, topo, store, params);
  std::vector<uint64_t> independent_ranks = glob_ranks_from_csv(store.ledger().to_csv());

  bool ok = collective_ranks.size() == 1 && collective_ranks[0] == 0 &&
            independent_ranks.size() == n;
  report("3", ok,
         "glob ops on " + std::to_string(collective_ranks.size()) +
             " rank(s) collective (expect 1), " + std::to_string(independent_ranks.size()) +
             " rank(s) independent (expect " + std::to_string(n) + ")");
}

// ---------------------------------------------------------------------
// 4. Replica correctness on the real backend: 4 node-agents, 64 x 1 MiB.
void criterion4() {
  TempDir tmp;
  sharedfs::SimStore reference(404);
  std::vector<std::pair<std::string, uint64_t>> files;
  for (int i = 0; i < 64; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "in/f%02d.bin", i);
    files.emplace_back(name, 1ull << 20);
  }
  for (const auto& [path, size] : files) {
    reference.add_file(path, size);
    std::filesystem::path full = std::filesystem::path(tmp.path) / "store" / path;
    std::filesystem::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary);
    Bytes content = reference.peek_content(path, 0, size);
    out.write(reinterpret_cast<const char*>(content.data()),
              static_cast<std::streamsize>(size));
  }
  sharedfs::RealStore store(tmp.path + "/store");
  auto spec = hookspec::parse_spec("broadcast to /cache {\n in/*.bin\n}\n");
  fabric::Topology topo = fabric::build_topology(4, 1);
  staging::RealNodeCaches caches(tmp.path + "/cache", 4);
  staging::LocalStagingOptions opts;
  opts.fabric.addr = "127.0.0.1:0";
  hookspec::FileManifest manifest;
  staging::stage_collective_local(spec, topo, store, caches, opts, &manifest);

  staging::VerifyReport clean = staging::verify_replicas_local(manifest, topo, caches);
  bool clean_ok = clean.all_ok() && clean.checked == 256;

  // flip one byte on node 2's copy of one file
  std::string victim = caches.staged_abs_path(2, manifest.entries[10]);
  {
    std::fstream f(victim, std::ios::binary | std::ios::in | std::ios::out);
    f.seekg(123456);
    char c = static_cast<char>(f.get());
    f.seekp(123456);
    f.put(static_cast<char>(c ^ 0x40));
  }
  staging::VerifyReport dirty = staging::verify_replicas_local(manifest, topo, caches);
  bool dirty_ok = dirty.failures.size() == 1 && dirty.failures[0].node == 2 &&
                  dirty.failures[0].source_path == manifest.entries[10].source_path;

  report("4", clean_ok && dirty_ok,
         std::to_string(clean.checked) + "/256 digests verified after staging; "
         "single-byte corruption isolated to " +
             std::to_string(dirty.failures.size()) + " (node,file) failure(s)");
}

// ---------------------------------------------------------------------
// 5. Barrier-freedom witness from the shipped mapreduce demo config.
void criterion5() {
  bench::ExperimentConfig cfg =
      bench::ExperimentConfig::from_config(load_config("mapreduce-demo.cfg"));
  std::string csv = bench::run_experiment(cfg);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  double slowest_map_end = 0;
  std::vector<std::pair<double, std::string>> merge_starts;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    f.push_back(cur);
    if (f[2] == "task_end" && f[3].rfind("map[", 0) == 0) {
      slowest_map_end = std::max(slowest_map_end, std::stod(f[0]));
    }
    if (f[2] == "task_start" && f[3].rfind("merge[", 0) == 0) {
      merge_starts.emplace_back(std::stod(f[0]), f[3]);
    }
  }
  int early = 0;
  for (const auto& [t, label] : merge_starts) {
    if (t < slowest_map_end) ++early;
  }
  report("5", early >= 1,
         std::to_string(early) + " merge start(s) before the slowest map ends at " +
             fmt(slowest_map_end) + " s");
}

// ---------------------------------------------------------------------
// 6. Merge-tree equivalence, 1000 randomized-schedule trials.
void criterion6() {
  taskflow::TaskRegistry registry = taskflow::TaskRegistry::with_builtins();
  Rng rng(60606);
  int good = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    size_t n = 1 + rng.next_below(64);
    bool use_concat = rng.next_below(2) == 0;
    taskflow::WorkloadEnv env;
    env.topo = fabric::build_topology(1 + static_cast<uint32_t>(rng.next_below(8)), 1);
    taskflow::SimEngine eng(env, registry);
    std::vector<taskflow::FutureId> items;
    std::string concat_fold;
    long long sum_fold = 0;
    for (size_t i = 0; i < n; ++i) {
      taskflow::TaskSpec leaf;
      leaf.kind = "const";
      leaf.label = "leaf" + std::to_string(i);
      if (use_concat) {
        std::string piece(1, static_cast<char>('a' + rng.next_below(26)));
        leaf.params["value"] = piece;
        concat_fold += piece;
      } else {
        long long v = static_cast<long long>(rng.next_below(10000));
        leaf.params["value"] = std::to_string(v);
        sum_fold += v;
      }
      leaf.est_duration_s = rng.next_double(0, 7);
      items.push_back(eng.submit(std::move(leaf)));
    }
    taskflow::TaskSpec proto;
    proto.kind = use_concat ? "concat.merge" : "sum.merge";
    proto.est_duration_s = rng.next_double(0, 2);
    taskflow::FutureId root = taskflow::merge_tree(eng, items, proto);
    eng.run();
    std::string result = to_string(eng.value(root));
    std::string expected = use_concat ? concat_fold : std::to_string(sum_fold);
    if (result == expected) ++good;
  }
  report("6", good == trials,
         std::to_string(good) + "/" + std::to_string(trials) +
             " randomized merge-tree trials equal the sequential fold");
}

// ---------------------------------------------------------------------
// 7. Makespan bounds for both shipped task models.
void criterion7() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"makespan-wide.cfg", "makespan-narrow.cfg"}) {
    bench::ExperimentConfig cfg = bench::ExperimentConfig::from_config(load_config(name));
    std::string csv = bench::run_experiment(cfg);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    double prev = 1e300;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::string cur;
      for (char c : line) {
        if (c == ',') {
          f.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
      f.push_back(cur);
      double lower = std::stod(f[6]), makespan = std::stod(f[7]), upper = std::stod(f[8]);
      if (!(lower - 1e-9 <= makespan && makespan <= upper + 1e-9 &&
            makespan <= prev + 1e-9)) {
        ok = false;
        detail += std::string(" violation in ") + name + " at workers=" + f[2];
      }
      prev = makespan;
    }
  }
  report("7", ok,
         ok ? "720 tasks U(5,160) and 4109 tasks U(5,25) stay within greedy bounds at "
              "W in {64,128,256,320}, non-increasing in W"
            : detail);
}

// ---------------------------------------------------------------------
// 8. Worker-cache property: one loader invocation for 100 tasks.
void criterion8() {
  sharedfs::SimStore store(808);
  store.add_file("one.bin", 1 << 20);
  auto spec = hookspec::parse_spec("broadcast to /c {\n one.bin\n}\n");
  staging::SimParams params;
  fabric::Topology topo = fabric::build_topology(1, 1);
  staging::SimNodeCaches caches(1);
  staging::stage_collective_sim(spec, topo, store, params, caches);

  taskflow::SimInputReader reader(caches, store, 1e9);
  taskflow::WorkloadEnv env;
  env.topo = topo;
  env.reader = &reader;
  taskflow::TaskRegistry registry = taskflow::TaskRegistry::with_builtins();
  taskflow::SimEngine eng(env, registry);
  for (int row = 0; row < 100; ++row) {
    taskflow::TaskSpec t;
    t.kind = "fit";
    t.label = "fit[" + std::to_string(row) + "]";
    t.params["row"] = std::to_string(row);
    t.params["inputs"] = "/c/one.bin";
    eng.submit(std::move(t));
  }
  eng.run();
  bool ok = reader.total_bytes_read() == (1u << 20);
  report("8", ok,
         "100 tasks on one worker loaded " +
             std::to_string(reader.total_bytes_read() >> 20) +
             " MiB from local storage (expect exactly 1)");
}

// ---------------------------------------------------------------------
// 9. Determinism: byte-identical CSV across 10 repetitions.
void criterion9() {
  Config small = Config::parse(R"(
[experiment]
scenario = staging_scaling
backend = sim
nodes = 1,2,4
agents_per_node = 2
seed = 99
[dataset]
file_count = 8
total_bytes = 8e6
[cost]
b_fs_bytes_per_s = 1e9
r_meta_ops_per_s = 1e6
l_meta_s = 1e-5
gamma = 0.3
[net]
b_net_bytes_per_s = 10e9
alpha_s = 1e-7
[cache]
b_local_bytes_per_s = 2e9
b_lr_bytes_per_s = 2e9
)");
  bench::ExperimentConfig scaling = bench::ExperimentConfig::from_config(small);
  bench::ExperimentConfig mapreduce =
      bench::ExperimentConfig::from_config(load_config("mapreduce-demo.cfg"));
  bench::ExperimentConfig makespan =
      bench::ExperimentConfig::from_config(load_config("makespan-narrow.cfg"));

  int identical = 0;
  std::string a = bench::run_experiment(scaling);
  std::string b = bench::run_experiment(mapreduce);
  std::string c = bench::run_experiment(makespan);
  for (int i = 0; i < 10; ++i) {
    if (bench::run_experiment(scaling) == a && bench::run_experiment(mapreduce) == b &&
        bench::run_experiment(makespan) == c) {
      ++identical;
    }
  }
  report("9", identical == 10,
         std::to_string(identical) + "/10 repetitions byte-identical across three "
         "scenario families");
}

}  // namespace

int main() {
  std::printf("stagekit acceptance suite\n");
  try {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    ++g_fail;
  }
  std::printf("%d passed, %d failed\n", g_pass, g_fail);
  return g_fail == 0 ? 0 : 1;
}
