#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stagekit/bytes.hpp"
#include "stagekit/digest.hpp"
#include "stagekit/sharedfs.hpp"

namespace stagekit::hookspec {

// One `broadcast to <dir> { patterns }` block: a node-local target
// directory plus the glob patterns whose matches are replicated there.
struct BroadcastGroup {
  std::string target_dir;             // absolute, no whitespace
  std::vector<std::string> patterns;  // source order preserved
};

struct StagingSpec {
  std::vector<BroadcastGroup> groups;  // source order preserved
};

struct ManifestEntry {
  std::string source_path;  // shared-store relative path
  std::string target_dir;   // node-local destination directory
  uint64_t size = 0;
  Digest digest;

  bool operator==(const ManifestEntry&) const = default;
};

// The resolved, ordered, checksummed file list: entries sorted by source
// path within each group, groups in spec order, no duplicate sources.
struct FileManifest {
  std::vector<ManifestEntry> entries;
  uint64_t total_bytes = 0;

  bool operator==(const FileManifest&) const = default;
};

// Parses staging-spec text. Grammar (line oriented, UTF-8):
//
//   file    := group+
//   group   := "broadcast" WS "to" WS target [WS] "{" NL (pattern NL)+ "}" NL
//   target  := absolute path, no whitespace
//   pattern := glob with *, ?, [...]  (no **)
//
// The opening brace may sit at the end of the broadcast line or alone on
// the following line. `#` lines and blank lines are ignored.
// Throws SpecParseError with 1-based line/column on bad input.
StagingSpec parse_spec(const std::string& text);

// Op counts observed while resolving; feeds the simulator's metadata
// cost accounting.
struct ResolveStats {
  uint64_t patterns = 0;
  uint64_t total_matches = 0;  // across patterns, before dedup
  uint64_t stat_probes = 0;
};

// Expands every pattern against the store (one glob op each, attributed
// to `rank`), dedups and sorts matches within each group, and stats each
// matched file for size and digest. A pattern with zero matches is a hard
// error: silent empty staging would surface later as inscrutable task
// failures.
FileManifest resolve_manifest(const StagingSpec& spec, sharedfs::SharedStore& store,
                              sharedfs::Rank rank = 0, ResolveStats* stats = nullptr);

// Wire format: header line `stagekit-manifest v1 sha256`, then one
// tab-separated record per entry (source, target_dir, size, hex digest),
// each newline-terminated. decode(encode(m)) == m including order.
Bytes encode_manifest(const FileManifest& m);
FileManifest decode_manifest(ByteView bytes);

}  // namespace stagekit::hookspec
