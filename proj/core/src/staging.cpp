#include "stagekit/staging.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stagekit/csv.hpp"
#include "stagekit/errors.hpp"

namespace fs = std::filesystem;

namespace stagekit::staging {

using fabric::Rank;

std::vector<Chunk> partition_file(uint64_t size, size_t leaders) {
  if (leaders == 0) throw StagingError("partition_file: no leaders");
  std::vector<Chunk> chunks(leaders);
  uint64_t base = size / leaders;
  uint64_t rem = size % leaders;
  uint64_t offset = 0;
  for (size_t i = 0; i < leaders; ++i) {
    uint64_t len = base + (i < rem ? 1 : 0);
    chunks[i] = {offset, len};
    offset += len;
  }
  return chunks;
}

std::string staged_rel_path(const ManifestEntry& e) {
  std::string dir = e.target_dir;
  while (!dir.empty() && dir.back() == '/') dir.pop_back();
  return dir + "/" + e.source_path;
}

const char* mode_name(Mode m) {
  return m == Mode::collective ? "collective" : "independent";
}

std::string StagingReport::csv_header() {
  return "mode,nodes,agents_per_node,total_bytes,staging_s,write_s,read_s,"
         "bytes_from_shared,glob_ops,aggregate_bw";
}

std::string StagingReport::csv_row() const {
  std::ostringstream out;
  out << mode_name(mode) << ',' << nodes << ',' << agents_per_node << ',' << total_bytes
      << ',' << fmt_g(staging_s) << ',' << fmt_g(write_s) << ',' << fmt_g(read_s) << ','
      << bytes_from_shared << ',' << glob_ops << ',' << fmt_g(aggregate_bw());
  return out.str();
}

// ---------------------------------------------------------------- sim

void SimNodeCaches::put(uint32_t node, const std::string& rel_path, Entry e) {
  bytes_written_[node] += e.size;
  tables_[node][rel_path] = std::move(e);
}

const SimNodeCaches::Entry* SimNodeCaches::find(uint32_t node,
                                                const std::string& rel_path) const {
  const auto& t = tables_[node];
  auto it = t.find(rel_path);
  return it == t.end() ? nullptr : &it->second;
}

const std::map<std::string, SimNodeCaches::Entry>& SimNodeCaches::table(uint32_t node) const {
  return tables_[node];
}

void SimNodeCaches::corrupt(uint32_t node, const std::string& rel_path) {
  auto it = tables_[node].find(rel_path);
  if (it == tables_[node].end()) throw StagingError("corrupt: no such cache entry");
  it->second.digest.bytes[0] ^= 0xff;
}

uint64_t SimNodeCaches::bytes_written(uint32_t node) const { return bytes_written_[node]; }

namespace {

struct LedgerDelta {
  uint64_t data_bytes_read = 0;
  uint64_t glob_ops = 0;
};

LedgerDelta delta_since(const sharedfs::IoCounters& before, const sharedfs::SharedStore& store) {
  sharedfs::IoCounters after = store.ledger().totals();
  return {after.data_bytes_read - before.data_bytes_read, after.glob_ops - before.glob_ops};
}

}  // namespace

StagingReport stage_collective_sim(const hookspec::StagingSpec& spec, const Topology& topo,
                                   sharedfs::SimStore& store, const SimParams& params,
                                   SimNodeCaches& caches, FileManifest* manifest_out) {
  if (caches.nodes() != topo.nodes) {
    throw StagingError("node cache set does not match topology");
  }
  std::vector<Rank> leaders = fabric::leader_set(topo).leaders;
  size_t n = leaders.size();
  fabric::SimFabric fab(topo, params.net);
  sharedfs::IoCounters before = store.ledger().totals();

  // (1) single-rank resolve: all glob/stat traffic lands on leader 0
  hookspec::ResolveStats rs;
  FileManifest manifest = hookspec::resolve_manifest(spec, store, leaders[0], &rs);
  fab.clock().advance(
      params.cost.charge_meta_resolve(1, rs.patterns, rs.total_matches, rs.stat_probes));

  // (2) manifest broadcast over the leader set
  Bytes encoded = hookspec::encode_manifest(manifest);
  fab.bcast(leaders, leaders[0], std::move(encoded));

  // (3) per file: partitioned contended read, ring exchange, local write
  double write_s = 0.0;
  for (const ManifestEntry& e : manifest.entries) {
    std::vector<Chunk> chunks = partition_file(e.size, n);
    std::vector<Bytes> parts(n);
    for (size_t i = 0; i < n; ++i) {
      if (chunks[i].length > 0) {
        parts[i] = store.read_range(e.source_path, chunks[i].offset, chunks[i].length,
                                    leaders[i]);
      }
    }
    fab.clock().advance(params.cost.charge_concurrent_read_total(n, static_cast<double>(e.size)));
    Bytes full = fab.allgather(leaders, parts);
    Digest actual = sha256(full);
    if (actual != e.digest) {
      throw StagingError("digest mismatch after collective read of '" + e.source_path + "'");
    }
    std::string rel = staged_rel_path(e);
    for (uint32_t node = 0; node < topo.nodes; ++node) {
      caches.put(node, rel, {e.size, actual, e.source_path});
    }
    write_s += static_cast<double>(e.size) / params.b_local_bytes_per_s;
  }
  double staging_s = fab.now();
  fab.clock().advance(write_s);

  // (4) digest verification on every node
  VerifyReport verify = verify_replicas_sim(manifest, topo, caches);
  if (!verify.all_ok()) {
    const ReplicaFailure& f = verify.failures.front();
    throw StagingError("replica verification failed on node " + std::to_string(f.node) +
                       " for '" + f.source_path + "'");
  }

  LedgerDelta delta = delta_since(before, store);
  StagingReport r;
  r.mode = Mode::collective;
  r.nodes = topo.nodes;
  r.agents_per_node = topo.agents_per_node;
  r.total_bytes = manifest.total_bytes;
  r.staging_s = staging_s;
  r.write_s = write_s;
  r.read_s = 0.0;
  r.bytes_from_shared = delta.data_bytes_read;
  r.bytes_written_local = static_cast<uint64_t>(topo.nodes) * manifest.total_bytes;
  r.glob_ops = delta.glob_ops;
  if (manifest_out) *manifest_out = std::move(manifest);
  return r;
}

StagingReport stage_independent_sim(const hookspec::StagingSpec& spec, const Topology& topo,
                                    sharedfs::SimStore& store, const SimParams& params,
                                    FileManifest* manifest_out) {
  std::vector<Rank> leaders = fabric::leader_set(topo).leaders;
  size_t n = leaders.size();
  fabric::SimFabric fab(topo, params.net);
  sharedfs::IoCounters before = store.ledger().totals();

  // Every leader globs and stats for itself; the metadata server
  // serializes the service time across the n resolvers.
  FileManifest manifest;
  hookspec::ResolveStats rs;
  for (size_t i = 0; i < n; ++i) {
    manifest = hookspec::resolve_manifest(spec, store, leaders[i], &rs);
  }
  fab.clock().advance(
      params.cost.charge_meta_resolve(n, rs.patterns, rs.total_matches, rs.stat_probes));

  // Every leader pulls the full dataset straight into task memory.
  for (size_t i = 0; i < n; ++i) {
    for (const ManifestEntry& e : manifest.entries) {
      store.charge_full_read(e.source_path, leaders[i]);
    }
  }
  fab.clock().advance(params.cost.charge_concurrent_read_total(
      n, static_cast<double>(n) * static_cast<double>(manifest.total_bytes)));

  LedgerDelta delta = delta_since(before, store);
  StagingReport r;
  r.mode = Mode::independent;
  r.nodes = topo.nodes;
  r.agents_per_node = topo.agents_per_node;
  r.total_bytes = manifest.total_bytes;
  r.staging_s = fab.now();
  r.write_s = 0.0;
  r.read_s = 0.0;
  r.bytes_from_shared = delta.data_bytes_read;
  r.bytes_written_local = 0;
  r.glob_ops = delta.glob_ops;
  if (manifest_out) *manifest_out = std::move(manifest);
  return r;
}

ReadReport read_phase_sim(const FileManifest& manifest, const SimNodeCaches& caches,
                          uint32_t node, const SimParams& params) {
  if (node >= caches.nodes()) throw StagingError("read_phase: node outside cache set");
  for (const ManifestEntry& e : manifest.entries) {
    const SimNodeCaches::Entry* c = caches.find(node, staged_rel_path(e));
    if (!c) {
      throw StoreError("missing staged input on node " + std::to_string(node) + ": '" +
                       e.source_path + "'");
    }
    if (c->digest != e.digest) {
      throw StoreError("corrupt staged input on node " + std::to_string(node) + ": '" +
                       e.source_path + "'");
    }
  }
  ReadReport rr;
  rr.bytes = manifest.total_bytes;
  rr.read_s = static_cast<double>(manifest.total_bytes) / params.b_lr_bytes_per_s;
  return rr;
}

VerifyReport verify_replicas_sim(const FileManifest& manifest, const Topology& topo,
                                 const SimNodeCaches& caches) {
  VerifyReport vr;
  for (uint32_t node = 0; node < topo.nodes; ++node) {
    for (const ManifestEntry& e : manifest.entries) {
      ++vr.checked;
      const SimNodeCaches::Entry* c = caches.find(node, staged_rel_path(e));
      if (!c || c->digest != e.digest || c->size != e.size) {
        vr.failures.push_back({node, e.source_path});
      }
    }
  }
  return vr;
}

// --------------------------------------------------------------- local

RealNodeCaches::RealNodeCaches(std::string root, uint32_t nodes)
    : root_(std::move(root)), nodes_(nodes), bytes_written_(nodes, 0) {
  fs::create_directories(root_);
}

std::string RealNodeCaches::node_root(uint32_t node) const {
  return root_ + "/node_" + std::to_string(node);
}

std::string RealNodeCaches::staged_abs_path(uint32_t node, const ManifestEntry& e) const {
  return node_root(node) + staged_rel_path(e);
}

void RealNodeCaches::write_entry(uint32_t node, const ManifestEntry& e, ByteView content) {
  std::string path = staged_abs_path(node, e);
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StagingError("cannot open cache file for write: " + path);
  out.write(reinterpret_cast<const char*>(content.data()),
            static_cast<std::streamsize>(content.size()));
  if (!out) throw StagingError("short write to cache file: " + path);
  out.close();
  std::lock_guard lock(mu_);
  bytes_written_[node] += content.size();
}

Bytes RealNodeCaches::read_entry(uint32_t node, const ManifestEntry& e) const {
  std::string path = staged_abs_path(node, e);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StoreError("missing staged input on node " + std::to_string(node) + ": '" +
                     e.source_path + "'");
  }
  Bytes content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

bool RealNodeCaches::entry_exists(uint32_t node, const ManifestEntry& e) const {
  return fs::is_regular_file(staged_abs_path(node, e));
}

uint64_t RealNodeCaches::bytes_written(uint32_t node) const {
  std::lock_guard lock(mu_);
  return bytes_written_[node];
}

namespace {

double wall_seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

Bytes pack_pair(double a, double b) {
  Bytes out;
  uint64_t ua, ub;
  std::memcpy(&ua, &a, 8);
  std::memcpy(&ub, &b, 8);
  put_u64le(out, ua);
  put_u64le(out, ub);
  return out;
}

std::pair<double, double> unpack_pair(ByteView bytes, size_t index) {
  double a, b;
  uint64_t ua = get_u64le(bytes.data() + index * 16);
  uint64_t ub = get_u64le(bytes.data() + index * 16 + 8);
  std::memcpy(&a, &ua, 8);
  std::memcpy(&b, &ub, 8);
  return {a, b};
}

}  // namespace

StagingReport stage_collective_local(const hookspec::StagingSpec& spec, const Topology& topo,
                                     sharedfs::SharedStore& store, RealNodeCaches& caches,
                                     const LocalStagingOptions& opts,
                                     FileManifest* manifest_out) {
  if (caches.nodes() != topo.nodes) {
    throw StagingError("node cache set does not match topology");
  }
  std::vector<Rank> leaders = fabric::leader_set(topo).leaders;
  size_t n = leaders.size();
  std::vector<Rank> all_ranks(topo.total_ranks());
  for (size_t i = 0; i < all_ranks.size(); ++i) all_ranks[i] = static_cast<Rank>(i);

  sharedfs::IoCounters before = store.ledger().totals();
  FileManifest manifest;
  std::mutex result_mu;
  double staging_max = 0, write_max = 0;

  fabric::run_local_agents(topo, opts.fabric, [&](fabric::Agent& agent) {
    bool is_leader = agent.rank() % topo.agents_per_node == 0;
    if (!is_leader) {
      agent.barrier(all_ranks);
      return;
    }
    size_t leader_index =
        static_cast<size_t>(agent.rank()) / topo.agents_per_node;
    uint32_t node = topo.node_of(agent.rank());
    auto start = std::chrono::steady_clock::now();

    Bytes encoded;
    if (agent.rank() == leaders[0]) {
      FileManifest m = hookspec::resolve_manifest(spec, store, agent.rank());
      encoded = hookspec::encode_manifest(m);
    }
    encoded = agent.bcast(leaders, leaders[0], std::move(encoded));
    FileManifest local_manifest = hookspec::decode_manifest(encoded);
    double staging_sum = wall_seconds(start);
    double write_sum = 0;

    for (const ManifestEntry& e : local_manifest.entries) {
      auto t0 = std::chrono::steady_clock::now();
      std::vector<Chunk> chunks = partition_file(e.size, n);
      Bytes mine;
      if (chunks[leader_index].length > 0) {
        mine = store.read_range(e.source_path, chunks[leader_index].offset,
                                chunks[leader_index].length, agent.rank());
      }
      Bytes full = agent.allgather(leaders, std::move(mine));
      staging_sum += wall_seconds(t0);
      if (sha256(full) != e.digest) {
        throw StagingError("digest mismatch after collective read of '" + e.source_path +
                           "' on node " + std::to_string(node));
      }
      auto t1 = std::chrono::steady_clock::now();
      caches.write_entry(node, e, full);
      write_sum += wall_seconds(t1);
    }

    Bytes packed = agent.allgather(leaders, pack_pair(staging_sum, write_sum));
    if (agent.rank() == leaders[0]) {
      double smax = 0, wmax = 0;
      for (size_t i = 0; i < n; ++i) {
        auto [s, w] = unpack_pair(packed, i);
        smax = std::max(smax, s);
        wmax = std::max(wmax, w);
      }
      std::lock_guard lock(result_mu);
      staging_max = smax;
      write_max = wmax;
      manifest = std::move(local_manifest);
    }
    agent.barrier(all_ranks);
  });

  // Verification re-hashes every replica; mismatches abort rather than
  // reporting a partially staged run as success.
  VerifyReport verify = verify_replicas_local(manifest, topo, caches);
  if (!verify.all_ok()) {
    const ReplicaFailure& f = verify.failures.front();
    throw StagingError("replica verification failed on node " + std::to_string(f.node) +
                       " for '" + f.source_path + "'");
  }

  LedgerDelta delta = delta_since(before, store);
  StagingReport r;
  r.mode = Mode::collective;
  r.nodes = topo.nodes;
  r.agents_per_node = topo.agents_per_node;
  r.total_bytes = manifest.total_bytes;
  r.staging_s = staging_max;
  r.write_s = write_max;
  r.read_s = 0.0;
  r.bytes_from_shared = delta.data_bytes_read;
  r.bytes_written_local = static_cast<uint64_t>(topo.nodes) * manifest.total_bytes;
  r.glob_ops = delta.glob_ops;
  if (manifest_out) *manifest_out = std::move(manifest);
  return r;
}

StagingReport stage_independent_local(const hookspec::StagingSpec& spec, const Topology& topo,
                                      sharedfs::SharedStore& store,
                                      const LocalStagingOptions& opts,
                                      FileManifest* manifest_out) {
  std::vector<Rank> leaders = fabric::leader_set(topo).leaders;
  std::vector<Rank> all_ranks(topo.total_ranks());
  for (size_t i = 0; i < all_ranks.size(); ++i) all_ranks[i] = static_cast<Rank>(i);

  sharedfs::IoCounters before = store.ledger().totals();
  FileManifest manifest;
  std::mutex result_mu;
  double staging_max = 0;

  fabric::run_local_agents(topo, opts.fabric, [&](fabric::Agent& agent) {
    bool is_leader = agent.rank() % topo.agents_per_node == 0;
    if (!is_leader) {
      agent.barrier(all_ranks);
      return;
    }
    auto start = std::chrono::steady_clock::now();
    FileManifest m = hookspec::resolve_manifest(spec, store, agent.rank());
    for (const ManifestEntry& e : m.entries) {
      if (e.size > 0) {
        Bytes content = store.read_range(e.source_path, 0, e.size, agent.rank());
        // straight to task memory; nothing written locally
      }
    }
    double elapsed = wall_seconds(start);
    {
      std::lock_guard lock(result_mu);
      staging_max = std::max(staging_max, elapsed);
      if (agent.rank() == leaders[0]) manifest = std::move(m);
    }
    agent.barrier(all_ranks);
  });

  LedgerDelta delta = delta_since(before, store);
  StagingReport r;
  r.mode = Mode::independent;
  r.nodes = topo.nodes;
  r.agents_per_node = topo.agents_per_node;
  r.total_bytes = manifest.total_bytes;
  r.staging_s = staging_max;
  r.write_s = 0.0;
  r.read_s = 0.0;
  r.bytes_from_shared = delta.data_bytes_read;
  r.bytes_written_local = 0;
  r.glob_ops = delta.glob_ops;
  if (manifest_out) *manifest_out = std::move(manifest);
  return r;
}

ReadReport read_phase_local(const FileManifest& manifest, const RealNodeCaches& caches,
                            uint32_t node) {
  auto start = std::chrono::steady_clock::now();
  uint64_t bytes = 0;
  for (const ManifestEntry& e : manifest.entries) {
    Bytes content = caches.read_entry(node, e);
    if (content.size() != e.size) {
      throw StoreError("corrupt staged input on node " + std::to_string(node) + ": '" +
                       e.source_path + "'");
    }
    bytes += content.size();
  }
  ReadReport rr;
  rr.bytes = bytes;
  rr.read_s = wall_seconds(start);
  return rr;
}

VerifyReport verify_replicas_local(const FileManifest& manifest, const Topology& topo,
                                   const RealNodeCaches& caches) {
  VerifyReport vr;
  for (uint32_t node = 0; node < topo.nodes; ++node) {
    for (const ManifestEntry& e : manifest.entries) {
      ++vr.checked;
      if (!caches.entry_exists(node, e)) {
        vr.failures.push_back({node, e.source_path});
        continue;
      }
      Bytes content = caches.read_entry(node, e);
      if (content.size() != e.size || sha256(content) != e.digest) {
        vr.failures.push_back({node, e.source_path});
      }
    }
  }
  return vr;
}

}  // namespace stagekit::staging
