#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "stagekit/fabric.hpp"
#include "stagekit/hookspec.hpp"
#include "stagekit/sharedfs.hpp"

namespace stagekit::staging {

using fabric::Topology;
using hookspec::FileManifest;
using hookspec::ManifestEntry;

// Contiguous per-leader partition of one file: chunks tile [0, size)
// exactly and differ by at most one byte. Leaders beyond the byte count
// get empty chunks.
struct Chunk {
  uint64_t offset = 0;
  uint64_t length = 0;
};

std::vector<Chunk> partition_file(uint64_t size, size_t leaders);

// Node-local location of a staged entry: target_dir plus the full
// store-relative source path, which keeps two same-named files from
// different source directories apart.
std::string staged_rel_path(const ManifestEntry& e);

enum class Mode { collective, independent };
const char* mode_name(Mode m);

// Per-run result. Times are simulated seconds (sim backend) or wall
// seconds (local backend). For collective staging runs read_s is zero;
// the Read phase is charged separately by read_phase().
struct StagingReport {
  Mode mode = Mode::collective;
  uint32_t nodes = 0;
  uint32_t agents_per_node = 0;
  uint64_t total_bytes = 0;
  double staging_s = 0;
  double write_s = 0;
  double read_s = 0;
  uint64_t bytes_from_shared = 0;
  uint64_t bytes_written_local = 0;
  uint64_t glob_ops = 0;

  double input_total_s() const { return staging_s + write_s + read_s; }
  double aggregate_bw() const {
    double t = input_total_s();
    if (t <= 0) return 0.0;
    return static_cast<double>(nodes) * static_cast<double>(total_bytes) / t;
  }

  static std::string csv_header();
  std::string csv_row() const;
};

struct ReadReport {
  double read_s = 0;
  uint64_t bytes = 0;
};

struct ReplicaFailure {
  uint32_t node = 0;
  std::string source_path;
};

struct VerifyReport {
  uint64_t checked = 0;
  std::vector<ReplicaFailure> failures;
  bool all_ok() const { return failures.empty(); }
};

// ------------------------------------------------------------- sim side

// Rates for everything node-local plus the shared-store and interconnect
// models, bundled for the simulated pipeline.
struct SimParams {
  sharedfs::CostModel cost;
  fabric::NetModel net;
  double b_local_bytes_per_s = 1e9;  // node-local write bandwidth
  double b_lr_bytes_per_s = 1e9;     // node-local per-process read bandwidth
};

// Simulated node-local caches: per node, a table of staged entries. No
// content is held; bytes replay from the shared store's content stream
// via the recorded source path.
class SimNodeCaches {
 public:
  struct Entry {
    uint64_t size = 0;
    Digest digest;
    std::string source_path;
  };

  explicit SimNodeCaches(uint32_t nodes) : nodes_(nodes), tables_(nodes) {}

  uint32_t nodes() const { return nodes_; }
  void put(uint32_t node, const std::string& rel_path, Entry e);
  const Entry* find(uint32_t node, const std::string& rel_path) const;
  const std::map<std::string, Entry>& table(uint32_t node) const;

  // Test hook: corrupt a staged entry's digest on one node.
  void corrupt(uint32_t node, const std::string& rel_path);

  uint64_t bytes_written(uint32_t node) const;

 private:
  uint32_t nodes_;
  std::vector<std::map<std::string, Entry>> tables_;
  std::vector<uint64_t> bytes_written_ = std::vector<uint64_t>(nodes_, 0);
};

// Collective staging, simulated: leader 0 resolves the manifest (all glob
// traffic lands on rank 0), the encoded manifest is broadcast over the
// leader set, then per file every leader reads its chunk (one contended
// batch against the shared store), a ring allgather reassembles the file,
// and each leader writes its node's replica at B_local. Digests are
// verified on every node before the report is produced.
StagingReport stage_collective_sim(const hookspec::StagingSpec& spec, const Topology& topo,
                                   sharedfs::SimStore& store, const SimParams& params,
                                   SimNodeCaches& caches,
                                   FileManifest* manifest_out = nullptr);

// Independent baseline, simulated: every leader resolves its own manifest
// and reads every file in full from the shared store; data lands in task
// memory, so nothing is written locally.
StagingReport stage_independent_sim(const hookspec::StagingSpec& spec, const Topology& topo,
                                    sharedfs::SimStore& store, const SimParams& params,
                                    FileManifest* manifest_out = nullptr);

// Read phase: total_bytes / B_lr, independent of node count and consumer
// count (per-process read bandwidth is the binding resource).
ReadReport read_phase_sim(const FileManifest& manifest, const SimNodeCaches& caches,
                          uint32_t node, const SimParams& params);

VerifyReport verify_replicas_sim(const FileManifest& manifest, const Topology& topo,
                                 const SimNodeCaches& caches);

// ------------------------------------------------------------ local side

// Directory-backed node caches: node n's replica of entry e lives at
// <root>/node_<n>/<target_dir>/<source_path>.
class RealNodeCaches {
 public:
  RealNodeCaches(std::string root, uint32_t nodes);

  uint32_t nodes() const { return nodes_; }
  std::string node_root(uint32_t node) const;
  std::string staged_abs_path(uint32_t node, const ManifestEntry& e) const;

  void write_entry(uint32_t node, const ManifestEntry& e, ByteView content);
  Bytes read_entry(uint32_t node, const ManifestEntry& e) const;
  bool entry_exists(uint32_t node, const ManifestEntry& e) const;

  uint64_t bytes_written(uint32_t node) const;

 private:
  std::string root_;
  uint32_t nodes_;
  mutable std::mutex mu_;
  std::vector<uint64_t> bytes_written_;
};

struct LocalStagingOptions {
  fabric::LocalFabricOptions fabric;
};

StagingReport stage_collective_local(const hookspec::StagingSpec& spec, const Topology& topo,
                                     sharedfs::SharedStore& store, RealNodeCaches& caches,
                                     const LocalStagingOptions& opts,
                                     FileManifest* manifest_out = nullptr);

StagingReport stage_independent_local(const hookspec::StagingSpec& spec, const Topology& topo,
                                      sharedfs::SharedStore& store,
                                      const LocalStagingOptions& opts,
                                      FileManifest* manifest_out = nullptr);

ReadReport read_phase_local(const FileManifest& manifest, const RealNodeCaches& caches,
                            uint32_t node);

VerifyReport verify_replicas_local(const FileManifest& manifest, const Topology& topo,
                                   const RealNodeCaches& caches);

}  // namespace stagekit::staging
