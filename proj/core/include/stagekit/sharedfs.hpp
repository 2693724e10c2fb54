#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "stagekit/bytes.hpp"
#include "stagekit/digest.hpp"

namespace stagekit::sharedfs {

using Rank = uint32_t;

// Byte and metadata-op accounting against the shared store, broken down
// per rank. Totals are computed from the per-rank table on snapshot, so
// they cannot drift out of sync.
struct IoCounters {
  uint64_t data_bytes_read = 0;
  uint64_t data_read_ops = 0;
  uint64_t glob_ops = 0;
  uint64_t stat_ops = 0;
  uint64_t opens = 0;
};

class IoLedger {
 public:
  void add_read(Rank rank, uint64_t bytes);
  void add_glob(Rank rank);
  void add_stat(Rank rank);
  void reset();

  IoCounters totals() const;
  std::map<Rank, IoCounters> per_rank() const;

  // CSV export: header `rank,data_bytes_read,data_read_ops,glob_ops,stat_ops,opens`,
  // one row per rank in ascending rank order.
  std::string to_csv() const;

 private:
  mutable std::mutex mu_;
  std::map<Rank, IoCounters> ranks_;
};

// Analytic contention model for the shared parallel filesystem.
//
// Effective aggregate bandwidth decays with the number of concurrent
// streams: B_eff(k) = B_fs / (1 + gamma*(k-1)). The single-parameter
// family is a calibration device, not a prediction: gamma is solved so
// the model hits a measured throughput at a given scale.
struct CostModel {
  double b_fs_bytes_per_s = 1e9;
  double r_meta_ops_per_s = 1e6;
  double l_meta_s = 0.0;
  double gamma = 0.0;

  double b_eff(uint64_t streams) const {
    return b_fs_bytes_per_s / (1.0 + gamma * static_cast<double>(streams - 1));
  }

  // Elapsed seconds for k concurrent readers pulling bytes_each apiece.
  double charge_concurrent_read(uint64_t streams, double bytes_each) const {
    if (streams == 0) return 0.0;
    return (static_cast<double>(streams) * bytes_each) / b_eff(streams);
  }

  // Same law expressed over the combined byte count of all streams.
  double charge_concurrent_read_total(uint64_t streams, double total_bytes) const {
    if (streams == 0) return 0.0;
    return total_bytes / b_eff(streams);
  }

  // One metadata op returning n_results entries (a glob listing n matches,
  // or a stat with n = 1).
  double charge_meta_op(uint64_t n_results) const {
    return l_meta_s + static_cast<double>(n_results) / r_meta_ops_per_s;
  }

  // k ranks each performing the same resolve sequence (patterns globs
  // yielding total_matches, then n_stats stat probes). Service time is
  // serialized through a single metadata server; per-op latencies overlap
  // across ranks but run sequentially within one rank. Reduces to the sum
  // of per-op charges when k = 1.
  double charge_meta_resolve(uint64_t resolvers, uint64_t patterns, uint64_t total_matches,
                             uint64_t n_stats) const {
    double service = static_cast<double>(total_matches + n_stats) / r_meta_ops_per_s;
    return static_cast<double>(resolvers) * service +
           static_cast<double>(patterns + n_stats) * l_meta_s;
  }
};

struct FileStat {
  uint64_t size = 0;
  Digest digest;
};

// Shared parallel-filesystem abstraction. Implementations instrument
// every access through an IoLedger; the `rank` argument attributes the
// operation to its caller.
class SharedStore {
 public:
  virtual ~SharedStore() = default;

  // Lexicographically sorted matches for a glob pattern (`*`, `?`, `[...]`;
  // `**` is rejected). Paths are store-relative, '/'-separated.
  virtual std::vector<std::string> glob(const std::string& pattern, Rank rank) = 0;

  // Size plus content digest. Counted as a metadata probe, not a data read,
  // even where the backend must touch bytes to hash them.
  virtual FileStat stat(const std::string& path, Rank rank) = 0;

  virtual Bytes read_range(const std::string& path, uint64_t offset, uint64_t length,
                           Rank rank) = 0;

  virtual bool exists(const std::string& path) = 0;

  IoLedger& ledger() { return ledger_; }
  const IoLedger& ledger() const { return ledger_; }

 protected:
  IoLedger ledger_;
};

// Directory-backed store. Paths are relative to the root.
class RealStore : public SharedStore {
 public:
  explicit RealStore(std::string root);

  std::vector<std::string> glob(const std::string& pattern, Rank rank) override;
  FileStat stat(const std::string& path, Rank rank) override;
  Bytes read_range(const std::string& path, uint64_t offset, uint64_t length,
                   Rank rank) override;
  bool exists(const std::string& path) override;

  const std::string& root() const { return root_; }

 private:
  std::string full_path(const std::string& rel) const;
  std::string root_;
};

// In-memory file table; content of each path is a deterministic keyed
// stream of (path, content seed), so terabytes of simulated data cost
// nothing to hold and digests are reproducible.
class SimStore : public SharedStore {
 public:
  explicit SimStore(uint64_t content_seed);

  void add_file(const std::string& path, uint64_t size);

  std::vector<std::string> glob(const std::string& pattern, Rank rank) override;
  FileStat stat(const std::string& path, Rank rank) override;
  Bytes read_range(const std::string& path, uint64_t offset, uint64_t length,
                   Rank rank) override;
  bool exists(const std::string& path) override;

  // Content generation without ledger traffic (used by the simulated node
  // cache, which replays staged content locally).
  Bytes peek_content(const std::string& path, uint64_t offset, uint64_t length) const;
  uint64_t file_size(const std::string& path) const;

  // Accounts a full-file read without materializing content; the
  // simulator uses this where thousands of ranks read the same file and
  // only the ledger matters.
  void charge_full_read(const std::string& path, Rank rank);

  uint64_t content_seed() const { return seed_; }

 private:
  struct Entry {
    uint64_t size = 0;
    uint64_t key = 0;
    mutable std::optional<Digest> digest;  // computed lazily, cached
  };
  const Entry& entry(const std::string& path) const;

  uint64_t seed_;
  std::map<std::string, Entry> files_;
  mutable std::mutex digest_mu_;
};

// Shared glob-matching helper (fnmatch semantics, `*` does not cross '/').
bool glob_match(const std::string& pattern, const std::string& path);
void validate_glob_pattern(const std::string& pattern);

}  // namespace stagekit::sharedfs
