#include "stagekit/taskflow.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "stagekit/csv.hpp"
#include "stagekit/errors.hpp"

namespace stagekit::taskflow {

const char* event_name(EventKind k) {
  switch (k) {
    case EventKind::task_start: return "task_start";
    case EventKind::task_end: return "task_end";
    case EventKind::future_set: return "future_set";
  }
  return "?";
}

std::string EventTrace::to_csv() const {
  std::ostringstream out;
  out << "time_s,rank,event,task_id\n";
  for (const TraceEvent& e : events) {
    out << fmt_g(e.time_s) << ',' << e.rank << ',' << event_name(e.kind) << ',' << e.task_id
        << '\n';
  }
  return out.str();
}

double EventTrace::makespan() const {
  double m = 0;
  for (const TraceEvent& e : events) {
    if (e.kind == EventKind::task_end) m = std::max(m, e.time_s);
  }
  return m;
}

const Bytes& WorkerCache::get_or_load(const std::string& key,
                                      const std::function<Bytes()>& loader) {
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;
  Bytes value = loader();  // not cached on failure
  ++loads_;
  return entries_.emplace(key, std::move(value)).first->second;
}

Bytes SimInputReader::read(uint32_t node, const std::string& rel_path) {
  const staging::SimNodeCaches::Entry* e = caches_.find(node, rel_path);
  if (!e) {
    throw StoreError("missing staged input on node " + std::to_string(node) + ": '" +
                     rel_path + "'");
  }
  bytes_read_ += e->size;
  return store_.peek_content(e->source_path, 0, e->size);
}

RealInputReader::RealInputReader(const staging::RealNodeCaches& caches,
                                 const hookspec::FileManifest& manifest)
    : caches_(caches) {
  for (const auto& e : manifest.entries) by_rel_path_[staging::staged_rel_path(e)] = e;
}

Bytes RealInputReader::read(uint32_t node, const std::string& rel_path) {
  auto it = by_rel_path_.find(rel_path);
  if (it == by_rel_path_.end()) {
    throw StoreError("input not in staged manifest: '" + rel_path + "'");
  }
  Bytes content = caches_.read_entry(node, it->second);
  std::lock_guard lock(mu_);
  bytes_read_ += content.size();
  return content;
}

const std::string& TaskCtx::param(const std::string& key) const {
  auto it = task->params.find(key);
  if (it == task->params.end()) {
    throw EngineError("task '" + task->label + "' missing param '" + key + "'");
  }
  return it->second;
}

Bytes TaskCtx::load_local(const std::string& rel_path) {
  if (!cache || !reader) throw EngineError("task context has no local input reader");
  const Bytes& bytes = cache->get_or_load(rel_path, [&] {
    Bytes b = reader->read(node, rel_path);
    charge(reader->read_cost_s(b.size()));
    return b;
  });
  return bytes;
}

void TaskRegistry::add(const std::string& kind, TaskFn fn) { fns_[kind] = std::move(fn); }

const TaskFn& TaskRegistry::lookup(const std::string& kind) const {
  auto it = fns_.find(kind);
  if (it == fns_.end()) throw EngineError("no task function registered for kind '" + kind + "'");
  return it->second;
}

// ------------------------------------------------------------ SimEngine

namespace {

struct TaskRecord {
  TaskSpec spec;
  FutureId output = 0;
  uint64_t unmet_inputs = 0;
  bool done = false;
};

}  // namespace

struct SimEngine::Impl {
  WorkloadEnv env;
  const TaskRegistry* registry;

  std::vector<Future> futures;                 // index = FutureId
  std::vector<TaskRecord> tasks;               // index = task id
  std::map<FutureId, std::vector<size_t>> waiters;

  std::deque<size_t> runnable;                 // FIFO
  std::set<Rank> idle;                         // ascending rank order
  std::vector<std::unique_ptr<WorkerCache>> caches;

  struct Completion {
    double time;
    Rank rank;
    uint64_t seq;
    size_t task;
    bool operator>(const Completion& o) const {
      return std::tie(time, rank, seq) > std::tie(o.time, o.rank, o.seq);
    }
  };
  std::priority_queue<Completion, std::vector<Completion>, std::greater<>> events;
  uint64_t next_seq = 0;
  double now = 0;
  bool ran = false;

  EventTrace trace;

  FutureId new_future() {
    futures.push_back(Future{futures.size(), false, {}, {}});
    return futures.back().id;
  }

  void set_value(FutureId id, Bytes value) {
    Future& f = futures.at(id);
    if (f.set) {
      throw EngineError("future " + std::to_string(id) + " already set (single assignment)");
    }
    f.set = true;
    f.value_digest = sha256(value);
    f.value = std::move(value);
    auto it = waiters.find(id);
    if (it != waiters.end()) {
      for (size_t t : it->second) {
        if (--tasks[t].unmet_inputs == 0) runnable.push_back(t);
      }
      waiters.erase(it);
    }
  }

  void dispatch_all() {
    while (!runnable.empty() && !idle.empty()) {
      size_t t = runnable.front();
      runnable.pop_front();
      Rank worker = *idle.begin();
      idle.erase(idle.begin());
      start_task(t, worker);
    }
  }

  void start_task(size_t t, Rank worker) {
    TaskRecord& rec = tasks[t];
    trace.events.push_back({now, worker, EventKind::task_start, rec.spec.label});

    std::vector<Bytes> inputs;
    inputs.reserve(rec.spec.inputs.size());
    for (FutureId fid : rec.spec.inputs) inputs.push_back(futures.at(fid).value);

    TaskCtx ctx;
    ctx.task = &rec.spec;
    ctx.inputs = &inputs;
    ctx.rank = worker;
    ctx.node = env.topo.node_of(worker);
    ctx.cache = caches[worker].get();
    ctx.reader = env.reader;

    Bytes result;
    try {
      result = registry->lookup(rec.spec.kind)(ctx);
    } catch (const std::exception& e) {
      throw EngineError("task '" + rec.spec.label + "' failed: " + e.what());
    }
    double duration = rec.spec.est_duration_s + ctx.charged_s;
    if (duration < 0) throw EngineError("negative task duration");
    pending_results[t] = std::move(result);
    events.push(Completion{now + duration, worker, next_seq++, t});
  }

  std::map<size_t, Bytes> pending_results;

  void run() {
    if (ran) throw EngineError("engine already ran");
    ran = true;
    for (Rank r = 0; r < env.topo.total_ranks(); ++r) idle.insert(r);
    dispatch_all();
    while (!events.empty()) {
      Completion c = events.top();
      events.pop();
      now = c.time;
      TaskRecord& rec = tasks[c.task];
      rec.done = true;
      trace.events.push_back({now, c.rank, EventKind::task_end, rec.spec.label});
      set_value(rec.output, std::move(pending_results[c.task]));
      pending_results.erase(c.task);
      trace.events.push_back({now, c.rank, EventKind::future_set, rec.spec.label});
      idle.insert(c.rank);
      dispatch_all();
    }
    for (const TaskRecord& rec : tasks) {
      if (!rec.done) {
        throw EngineError("task '" + rec.spec.label +
                          "' never became runnable (unset input future)");
      }
    }
  }
};

SimEngine::SimEngine(const WorkloadEnv& env, const TaskRegistry& registry)
    : impl_(std::make_unique<Impl>()) {
  impl_->env = env;
  impl_->registry = &registry;
  uint64_t workers = env.topo.total_ranks();
  impl_->caches.reserve(workers);
  for (uint64_t i = 0; i < workers; ++i) {
    impl_->caches.push_back(std::make_unique<WorkerCache>());
  }
}

SimEngine::~SimEngine() = default;

FutureId SimEngine::make_future() { return impl_->new_future(); }

void SimEngine::set_future(FutureId id, Bytes value) {
  impl_->set_value(id, std::move(value));
}

FutureId SimEngine::submit(TaskSpec task) {
  if (impl_->ran) throw EngineError("engine already ran; cannot submit");
  if (task.label.empty()) task.label = task.kind + "#" + std::to_string(impl_->tasks.size());
  TaskRecord rec;
  rec.output = impl_->new_future();
  rec.spec = std::move(task);
  size_t id = impl_->tasks.size();
  for (FutureId fid : rec.spec.inputs) {
    if (fid >= impl_->futures.size()) throw EngineError("task input references unknown future");
    if (!impl_->futures[fid].set) {
      ++rec.unmet_inputs;
      impl_->waiters[fid].push_back(id);
    }
  }
  FutureId out = rec.output;
  bool ready = rec.unmet_inputs == 0;
  impl_->tasks.push_back(std::move(rec));
  if (ready) impl_->runnable.push_back(id);
  return out;
}

void SimEngine::run() { impl_->run(); }

const Bytes& SimEngine::value(FutureId id) const {
  const Future& f = impl_->futures.at(id);
  if (!f.set) throw EngineError("future " + std::to_string(id) + " is unset");
  return f.value;
}

const EventTrace& SimEngine::trace() const { return impl_->trace; }

double SimEngine::now() const { return impl_->now; }

WorkerCache& SimEngine::worker_cache(Rank r) { return *impl_->caches.at(r); }

// ------------------------------------------------------------- patterns

std::vector<FutureId> foreach_range(Engine& eng, int64_t start, int64_t stop,
                                    const std::function<TaskSpec(int64_t)>& body) {
  if (start > stop) throw EngineError("foreach_range: start > stop");
  std::vector<FutureId> futures;
  futures.reserve(static_cast<size_t>(stop - start));
  for (int64_t i = start; i < stop; ++i) futures.push_back(eng.submit(body(i)));
  return futures;
}

namespace {

FutureId merge_tree_range(Engine& eng, const std::vector<FutureId>& items, size_t lo,
                          size_t hi, const TaskSpec& proto) {
  size_t n = hi - lo;
  if (n == 1) return items[lo];
  size_t mid = lo + n / 2;
  FutureId left = merge_tree_range(eng, items, lo, mid, proto);
  FutureId right = merge_tree_range(eng, items, mid, hi, proto);
  TaskSpec t = proto;
  t.inputs = {left, right};
  t.label = "merge[" + std::to_string(lo) + ".." + std::to_string(hi) + ")";
  return eng.submit(std::move(t));
}

}  // namespace

FutureId merge_tree(Engine& eng, const std::vector<FutureId>& items,
                    const TaskSpec& merge_proto) {
  if (items.empty()) throw EngineError("merge_tree: empty input list");
  return merge_tree_range(eng, items, 0, items.size(), merge_proto);
}

Bytes run_map_reduce(Engine& eng, const MapReduceSpec& spec) {
  if (spec.n < 1) throw EngineError("run_map_reduce: n must be >= 1");
  std::vector<FutureId> mapped(static_cast<size_t>(spec.n));
  for (int64_t i = 0; i < spec.n; ++i) {
    TaskSpec find;
    find.kind = spec.find_kind;
    find.label = "find[" + std::to_string(i) + "]";
    find.params["index"] = std::to_string(i);
    find.est_duration_s = spec.find_duration_s;
    FutureId found = eng.submit(std::move(find));

    TaskSpec map;
    map.kind = spec.map_kind;
    map.label = "map[" + std::to_string(i) + "]";
    map.params["index"] = std::to_string(i);
    map.inputs = {found};
    if (!spec.map_durations_s.empty()) {
      size_t di = std::min(static_cast<size_t>(i), spec.map_durations_s.size() - 1);
      map.est_duration_s = spec.map_durations_s[di];
    }
    mapped[static_cast<size_t>(i)] = eng.submit(std::move(map));
  }

  TaskSpec merge_proto;
  merge_proto.kind = spec.merge_kind;
  merge_proto.est_duration_s = spec.merge_duration_s;
  FutureId final_future = merge_tree(eng, mapped, merge_proto);

  eng.run();
  Bytes final_value = eng.value(final_future);
  if (!spec.out_path.empty()) {
    std::ofstream out(spec.out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw EngineError("cannot write output file: " + spec.out_path);
    out.write(reinterpret_cast<const char*>(final_value.data()),
              static_cast<std::streamsize>(final_value.size()));
  }
  return final_value;
}

// ------------------------------------------------------------- grid fit

void run_grid_fit(Engine& eng, const GridFitSpec& spec) {
  if (spec.row_start > spec.row_stop) throw EngineError("run_grid_fit: bad row range");
  std::string inputs_joined;
  for (const std::string& p : spec.input_rel_paths) {
    if (!inputs_joined.empty()) inputs_joined += ',';
    inputs_joined += p;
  }

  std::vector<FutureId> rows = foreach_range(eng, spec.row_start, spec.row_stop, [&](int64_t i) {
    TaskSpec t;
    t.kind = "fit";
    t.label = "fit[" + std::to_string(i) + "]";
    t.params["row"] = std::to_string(i);
    t.params["inputs"] = inputs_joined;
    t.est_duration_s = spec.task_duration_s;
    return t;
  });

  eng.run();

  // Gather and sort by row so output bytes are schedule-independent.
  std::vector<std::pair<int64_t, std::string>> lines;
  lines.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    int64_t row = spec.row_start + static_cast<int64_t>(i);
    lines.emplace_back(row, to_string(eng.value(rows[i])));
  }
  std::sort(lines.begin(), lines.end());

  std::ofstream out(spec.out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw EngineError("cannot write output file: " + spec.out_path);
  out << "stagekit-fit v1\n";
  for (const auto& [row, line] : lines) out << row << '\t' << line << '\n';
  if (!out) throw EngineError("short write to output file: " + spec.out_path);
}

// ------------------------------------------------------------- builtins

TaskRegistry TaskRegistry::with_builtins() {
  TaskRegistry reg;

  // demo mapreduce: find produces "item<i>", map produces its index as a
  // line, merge keeps the combined line list sorted.
  reg.add("demo.find", [](TaskCtx& ctx) { return to_bytes("item" + ctx.param("index")); });
  reg.add("demo.map", [](TaskCtx& ctx) { return to_bytes(ctx.param("index") + "\n"); });
  reg.add("demo.merge", [](TaskCtx& ctx) {
    std::vector<std::string> lines;
    for (const Bytes& in : *ctx.inputs) {
      std::istringstream is(to_string(in));
      std::string line;
      while (std::getline(is, line)) lines.push_back(line);
    }
    std::sort(lines.begin(), lines.end(),
              [](const std::string& a, const std::string& b) {
                if (a.size() != b.size()) return a.size() < b.size();
                return a < b;
              });
    std::string out;
    for (const std::string& l : lines) out += l + "\n";
    return to_bytes(out);
  });

  reg.add("const", [](TaskCtx& ctx) { return to_bytes(ctx.param("value")); });

  reg.add("concat.merge", [](TaskCtx& ctx) {
    Bytes out;
    for (const Bytes& in : *ctx.inputs) append(out, in);
    return out;
  });

  reg.add("sum.merge", [](TaskCtx& ctx) {
    long long total = 0;
    for (const Bytes& in : *ctx.inputs) total += std::stoll(to_string(in));
    return to_bytes(std::to_string(total));
  });

  reg.add("fit", [](TaskCtx& ctx) {
    uint64_t row = std::stoull(ctx.param("row"));
    const std::string& joined = ctx.param("inputs");
    // Combined digest over all listed inputs, cached per worker so the
    // hash is paid once, like the loads themselves.
    const Bytes& digest_bytes = ctx.cache->get_or_load("digest:" + joined, [&] {
      Sha256 h;
      std::string cur;
      std::istringstream is(joined);
      while (std::getline(is, cur, ',')) {
        if (cur.empty()) continue;
        Bytes content = ctx.load_local(cur);
        h.update(content);
      }
      Digest d = h.finish();
      return Bytes(d.bytes.begin(), d.bytes.end());
    });
    Digest combined;
    std::copy(digest_bytes.begin(), digest_bytes.end(), combined.bytes.begin());
    FitResult r = fit_kernel(combined, row);
    std::ostringstream out;
    out << fmt_g(r.argmin) << '\t' << fmt_g(r.value) << '\t' << r.iterations;
    return to_bytes(out.str());
  });

  return reg;
}

}  // namespace stagekit::taskflow
