#include <chrono>
#include <deque>
#include <mutex>

#include "stagekit/errors.hpp"
#include "stagekit/taskflow.hpp"

namespace stagekit::taskflow {

namespace {

// Queue protocol tags (application tag space).
constexpr uint16_t kTagWorkReq = 16;
constexpr uint16_t kTagTask = 17;
constexpr uint16_t kTagResult = 18;
constexpr uint16_t kTagShutdown = 19;

void put_string(Bytes& out, const std::string& s) {
  put_u32le(out, static_cast<uint32_t>(s.size()));
  append(out, to_bytes(s));
}

std::string get_string(ByteView in, size_t& pos) {
  if (pos + 4 > in.size()) throw EngineError("task frame truncated");
  uint32_t len = get_u32le(in.data() + pos);
  pos += 4;
  if (pos + len > in.size()) throw EngineError("task frame truncated");
  std::string s(reinterpret_cast<const char*>(in.data() + pos), len);
  pos += len;
  return s;
}

Bytes encode_task(uint64_t task_id, const TaskSpec& spec, const std::vector<Bytes>& inputs) {
  Bytes out;
  put_u64le(out, task_id);
  put_string(out, spec.kind);
  put_string(out, spec.label);
  put_u32le(out, static_cast<uint32_t>(spec.params.size()));
  for (const auto& [k, v] : spec.params) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u32le(out, static_cast<uint32_t>(inputs.size()));
  for (const Bytes& b : inputs) {
    put_u64le(out, b.size());
    append(out, b);
  }
  return out;
}

struct WireTask {
  uint64_t task_id = 0;
  TaskSpec spec;
  std::vector<Bytes> inputs;
};

WireTask decode_task(ByteView in) {
  WireTask t;
  if (in.size() < 8) throw EngineError("task frame truncated");
  t.task_id = get_u64le(in.data());
  size_t pos = 8;
  t.spec.kind = get_string(in, pos);
  t.spec.label = get_string(in, pos);
  if (pos + 4 > in.size()) throw EngineError("task frame truncated");
  uint32_t nparams = get_u32le(in.data() + pos);
  pos += 4;
  for (uint32_t i = 0; i < nparams; ++i) {
    std::string k = get_string(in, pos);
    t.spec.params[k] = get_string(in, pos);
  }
  if (pos + 4 > in.size()) throw EngineError("task frame truncated");
  uint32_t ninputs = get_u32le(in.data() + pos);
  pos += 4;
  for (uint32_t i = 0; i < ninputs; ++i) {
    if (pos + 8 > in.size()) throw EngineError("task frame truncated");
    uint64_t len = get_u64le(in.data() + pos);
    pos += 8;
    if (pos + len > in.size()) throw EngineError("task frame truncated");
    t.inputs.emplace_back(in.begin() + pos, in.begin() + pos + len);
    pos += len;
  }
  return t;
}

Bytes encode_result(uint64_t task_id, bool ok, ByteView body) {
  Bytes out;
  put_u64le(out, task_id);
  out.push_back(ok ? 1 : 0);
  append(out, body);
  return out;
}

}  // namespace

struct LocalEngine::Impl {
  WorkloadEnv env;
  const TaskRegistry* registry;
  fabric::LocalFabricOptions fabric_opts;

  struct TaskRecord {
    TaskSpec spec;
    FutureId output = 0;
    uint64_t unmet_inputs = 0;
    bool done = false;
  };

  std::vector<Future> futures;
  std::vector<TaskRecord> tasks;
  std::map<FutureId, std::vector<size_t>> waiters;
  std::deque<size_t> runnable;
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

  // ---- queue agent ----

  void queue_agent(fabric::Agent& agent) {
    using clock = std::chrono::steady_clock;
    auto start = clock::now();
    auto now_s = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

    uint32_t n_workers = static_cast<uint32_t>(agent.topology().total_ranks() - 1);
    size_t remaining = tasks.size();
    std::deque<Rank> parked;  // workers with an outstanding pull
    uint32_t shut_down = 0;
    std::string failure;

    auto dispatch = [&](Rank fabric_rank) {
      size_t t = runnable.front();
      runnable.pop_front();
      std::vector<Bytes> inputs;
      for (FutureId fid : tasks[t].spec.inputs) inputs.push_back(futures.at(fid).value);
      Rank worker = fabric_rank - 1;
      trace.events.push_back({now_s(), worker, EventKind::task_start, tasks[t].spec.label});
      agent.send(fabric_rank, kTagTask, encode_task(t, tasks[t].spec, inputs));
    };

    while (shut_down < n_workers) {
      fabric::Message m = agent.recv_any({kTagWorkReq, kTagResult});
      if (m.tag == kTagWorkReq) {
        if (!failure.empty() || remaining == 0) {
          agent.send(m.src, kTagShutdown, {});
          ++shut_down;
        } else if (!runnable.empty()) {
          dispatch(m.src);
        } else {
          parked.push_back(m.src);
        }
        continue;
      }
      // result
      if (m.payload.size() < 9) throw EngineError("result frame truncated");
      uint64_t task_id = get_u64le(m.payload.data());
      bool ok = m.payload[8] == 1;
      Bytes body(m.payload.begin() + 9, m.payload.end());
      Rank worker = m.src - 1;
      TaskRecord& rec = tasks.at(task_id);
      if (!ok) {
        if (failure.empty()) {
          failure = "task '" + rec.spec.label + "' failed: " + to_string(body);
        }
        --remaining;
        while (!parked.empty()) {
          agent.send(parked.front(), kTagShutdown, {});
          parked.pop_front();
          ++shut_down;
        }
        continue;
      }
      rec.done = true;
      trace.events.push_back({now_s(), worker, EventKind::task_end, rec.spec.label});
      set_value(rec.output, std::move(body));
      trace.events.push_back({now_s(), worker, EventKind::future_set, rec.spec.label});
      --remaining;
      while (!parked.empty() && !runnable.empty()) {
        Rank w = parked.front();
        parked.pop_front();
        dispatch(w);
      }
      if (remaining == 0) {
        while (!parked.empty()) {
          agent.send(parked.front(), kTagShutdown, {});
          parked.pop_front();
          ++shut_down;
        }
      }
    }
    if (!failure.empty()) throw EngineError(failure);
    for (const TaskRecord& rec : tasks) {
      if (!rec.done) {
        throw EngineError("task '" + rec.spec.label +
                          "' never became runnable (unset input future)");
      }
    }
  }

  // ---- worker agents ----

  void worker_agent(fabric::Agent& agent) {
    WorkerCache cache;
    Rank worker = agent.rank() - 1;
    uint32_t node = env.topo.node_of(worker);
    for (;;) {
      agent.send(0, kTagWorkReq, {});
      fabric::Message m = agent.recv_any({kTagTask, kTagShutdown});
      if (m.tag == kTagShutdown) return;
      WireTask wt = decode_task(m.payload);
      TaskCtx ctx;
      ctx.task = &wt.spec;
      ctx.inputs = &wt.inputs;
      ctx.rank = worker;
      ctx.node = node;
      ctx.cache = &cache;
      ctx.reader = env.reader;
      try {
        Bytes result = registry->lookup(wt.spec.kind)(ctx);
        agent.send(0, kTagResult, encode_result(wt.task_id, true, result));
      } catch (const std::exception& e) {
        agent.send(0, kTagResult,
                   encode_result(wt.task_id, false, to_bytes(std::string(e.what()))));
      }
    }
  }

  void run() {
    if (ran) throw EngineError("engine already ran");
    ran = true;
    // fabric rank 0 is the queue; workers are fabric ranks 1..W
    fabric::Topology fabric_topo =
        fabric::build_topology(1, static_cast<uint32_t>(env.topo.total_ranks()) + 1);
    fabric::run_local_agents(fabric_topo, fabric_opts, [&](fabric::Agent& agent) {
      if (agent.rank() == 0) {
        queue_agent(agent);
      } else {
        worker_agent(agent);
      }
    });
  }
};

LocalEngine::LocalEngine(const WorkloadEnv& env, const TaskRegistry& registry,
                         fabric::LocalFabricOptions fabric_opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->env = env;
  impl_->registry = &registry;
  impl_->fabric_opts = std::move(fabric_opts);
}

LocalEngine::~LocalEngine() = default;

FutureId LocalEngine::make_future() { return impl_->new_future(); }

void LocalEngine::set_future(FutureId id, Bytes value) {
  impl_->set_value(id, std::move(value));
}

FutureId LocalEngine::submit(TaskSpec task) {
  if (impl_->ran) throw EngineError("engine already ran; cannot submit");
  if (task.label.empty()) {
    task.label = task.kind + "#" + std::to_string(impl_->tasks.size());
  }
  Impl::TaskRecord rec;
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

void LocalEngine::run() { impl_->run(); }

const Bytes& LocalEngine::value(FutureId id) const {
  const Future& f = impl_->futures.at(id);
  if (!f.set) throw EngineError("future " + std::to_string(id) + " is unset");
  return f.value;
}

const EventTrace& LocalEngine::trace() const { return impl_->trace; }

}  // namespace stagekit::taskflow
