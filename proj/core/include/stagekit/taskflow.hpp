#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stagekit/bytes.hpp"
#include "stagekit/digest.hpp"
#include "stagekit/fabric.hpp"
#include "stagekit/staging.hpp"

namespace stagekit::taskflow {

using fabric::Rank;
using fabric::Topology;

using FutureId = uint64_t;

// Single-assignment value handle. Futures are created unset and may be
// set exactly once; a second set is a hard error.
struct Future {
  FutureId id = 0;
  bool set = false;
  Bytes value;
  Digest value_digest;
};

struct TaskSpec {
  std::string kind;               // executor registry key
  std::string label;              // human-readable id used in traces
  std::vector<FutureId> inputs;   // task runs only when all are set
  std::map<std::string, std::string> params;
  double est_duration_s = 0.0;    // simulated compute time; ignored by the local backend
};

enum class EventKind { task_start, task_end, future_set };
const char* event_name(EventKind k);

struct TraceEvent {
  double time_s = 0;
  Rank rank = 0;
  EventKind kind = EventKind::task_start;
  std::string task_id;
};

struct EventTrace {
  std::vector<TraceEvent> events;

  // CSV export: header `time_s,rank,event,task_id`.
  std::string to_csv() const;
  double makespan() const;  // time of the last task_end
};

// Per-worker in-memory input cache: at most one loader invocation per
// (worker, key); loader failures propagate and are not cached.
class WorkerCache {
 public:
  const Bytes& get_or_load(const std::string& key, const std::function<Bytes()>& loader);
  uint64_t loads() const { return loads_; }
  bool contains(const std::string& key) const { return entries_.count(key) > 0; }

 private:
  std::map<std::string, Bytes> entries_;
  uint64_t loads_ = 0;
};

// Reads staged inputs from a node-local cache. Tasks go through this
// (never the shared store): a missing local input is an error, proving a
// staging gap rather than silently falling back.
class LocalInputReader {
 public:
  virtual ~LocalInputReader() = default;
  virtual Bytes read(uint32_t node, const std::string& rel_path) = 0;
  // Simulated seconds to read `bytes` locally (0 for the real backend,
  // where wall time is measured instead).
  virtual double read_cost_s(uint64_t bytes) const = 0;
  virtual uint64_t total_bytes_read() const = 0;
};

class SimInputReader : public LocalInputReader {
 public:
  SimInputReader(const staging::SimNodeCaches& caches, const sharedfs::SimStore& store,
                 double b_lr_bytes_per_s)
      : caches_(caches), store_(store), b_lr_(b_lr_bytes_per_s) {}
  Bytes read(uint32_t node, const std::string& rel_path) override;
  double read_cost_s(uint64_t bytes) const override {
    return static_cast<double>(bytes) / b_lr_;
  }
  uint64_t total_bytes_read() const override { return bytes_read_; }

 private:
  const staging::SimNodeCaches& caches_;
  const sharedfs::SimStore& store_;
  double b_lr_;
  uint64_t bytes_read_ = 0;
};

class RealInputReader : public LocalInputReader {
 public:
  RealInputReader(const staging::RealNodeCaches& caches,
                  const hookspec::FileManifest& manifest);
  Bytes read(uint32_t node, const std::string& rel_path) override;
  double read_cost_s(uint64_t) const override { return 0.0; }
  uint64_t total_bytes_read() const override { return bytes_read_; }

 private:
  const staging::RealNodeCaches& caches_;
  std::map<std::string, hookspec::ManifestEntry> by_rel_path_;
  std::mutex mu_;
  uint64_t bytes_read_ = 0;
};

// Execution context handed to task functions.
struct TaskCtx {
  const TaskSpec* task = nullptr;
  const std::vector<Bytes>* inputs = nullptr;
  Rank rank = 0;
  uint32_t node = 0;
  WorkerCache* cache = nullptr;
  LocalInputReader* reader = nullptr;
  double charged_s = 0.0;  // extra simulated time accumulated by the task

  void charge(double seconds) { charged_s += seconds; }
  const std::string& param(const std::string& key) const;
  Bytes load_local(const std::string& rel_path);  // via cache + reader
};

using TaskFn = std::function<Bytes(TaskCtx&)>;

class TaskRegistry {
 public:
  void add(const std::string& kind, TaskFn fn);
  const TaskFn& lookup(const std::string& kind) const;

  // Registry with the built-in kinds (demo find/map/merge, concat/sum
  // merges, const leaves, grid-fit).
  static TaskRegistry with_builtins();

 private:
  std::map<std::string, TaskFn> fns_;
};

// Workers-and-nodes arrangement for an engine run. Worker rank r lives
// on node r / agents_per_node and reads that node's cache.
struct WorkloadEnv {
  Topology topo{1, 1};
  LocalInputReader* reader = nullptr;
};

class Engine {
 public:
  virtual ~Engine() = default;

  // Futures for external inputs; must be set before run().
  virtual FutureId make_future() = 0;
  virtual void set_future(FutureId id, Bytes value) = 0;

  virtual FutureId submit(TaskSpec task) = 0;
  virtual void run() = 0;

  virtual const Bytes& value(FutureId id) const = 0;
  virtual const EventTrace& trace() const = 0;
};

// Deterministic discrete-event engine: a single event loop with events
// totally ordered by (time, rank, sequence); idle workers pull from a
// FIFO runnable queue, lowest rank first. Task functions execute at
// dispatch; their simulated duration is est_duration_s plus whatever the
// function charges.
class SimEngine : public Engine {
 public:
  SimEngine(const WorkloadEnv& env, const TaskRegistry& registry);
  ~SimEngine() override;

  FutureId make_future() override;
  void set_future(FutureId id, Bytes value) override;
  FutureId submit(TaskSpec task) override;
  void run() override;
  const Bytes& value(FutureId id) const override;
  const EventTrace& trace() const override;

  double now() const;
  WorkerCache& worker_cache(Rank r);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Real multi-agent engine over the local fabric: rank 0 is the work
// queue, every other fabric rank is a worker. Workers pull with explicit
// work requests; the queue never pushes unsolicited tasks. Trace times
// are wall seconds from run start, recorded at the queue.
class LocalEngine : public Engine {
 public:
  LocalEngine(const WorkloadEnv& env, const TaskRegistry& registry,
              fabric::LocalFabricOptions fabric_opts = {});
  ~LocalEngine() override;

  FutureId make_future() override;
  void set_future(FutureId id, Bytes value) override;
  FutureId submit(TaskSpec task) override;
  void run() override;
  const Bytes& value(FutureId id) const override;
  const EventTrace& trace() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ------------------------------------------------------------- patterns

// One task per index in [start, stop); returned futures are in index
// order. The body callback builds each task (typically stamping the
// index into params).
std::vector<FutureId> foreach_range(Engine& eng, int64_t start, int64_t stop,
                                    const std::function<TaskSpec(int64_t)>& body);

// Barrier-free pairwise reduction: splits at floor(n/2), recursing on the
// halves; each merge becomes runnable the moment its two inputs are set.
// merge_proto supplies kind/params/duration for every merge task.
FutureId merge_tree(Engine& eng, const std::vector<FutureId>& items,
                    const TaskSpec& merge_proto);

struct MapReduceSpec {
  int64_t n = 1;
  std::string find_kind = "demo.find";
  std::string map_kind = "demo.map";
  std::string merge_kind = "demo.merge";
  double find_duration_s = 0.0;
  std::vector<double> map_durations_s;  // per index; last value repeats
  double merge_duration_s = 1.0;
  std::string out_path;  // final value written here if non-empty
};

// find -> map per slot, then a pairwise merge tree over the map outputs;
// no barrier separates the phases. Returns the final merged value.
Bytes run_map_reduce(Engine& eng, const MapReduceSpec& spec);

// -------------------------------------------------------------- grid fit

struct FitResult {
  double argmin = 0;
  double value = 0;
  int iterations = 0;
};

// Synthetic fit: golden-section minimization of a quartic whose
// coefficients derive from (input digest, row); fixed 200 iterations so
// cost and result are deterministic functions of the staged bytes.
FitResult fit_kernel(const Digest& input_digest, uint64_t row);
inline constexpr int kFitIterations = 200;

struct GridFitSpec {
  std::vector<std::string> input_rel_paths;  // node-local staged paths
  int64_t row_start = 0;
  int64_t row_stop = 0;
  double task_duration_s = 0.0;  // simulated compute per row
  std::string out_path;
};

// One fit task per row; results gathered, sorted by row, and written as
// `stagekit-fit v1` with one `row<TAB>argmin<TAB>value<TAB>iterations`
// line per row. Inputs come exclusively from node-local caches.
void run_grid_fit(Engine& eng, const GridFitSpec& spec);

}  // namespace stagekit::taskflow
