#include "stagekit/hookspec.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "stagekit/errors.hpp"

namespace stagekit::hookspec {

namespace {

struct Line {
  std::string text;
  int number;  // 1-based
};

std::vector<Line> significant_lines(const std::string& text) {
  std::vector<Line> out;
  std::istringstream in(text);
  std::string raw;
  int n = 0;
  while (std::getline(in, raw)) {
    ++n;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    size_t a = raw.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    if (raw[a] == '#') continue;
    size_t b = raw.find_last_not_of(" \t");
    out.push_back({raw.substr(a, b - a + 1), n});
  }
  return out;
}

[[noreturn]] void fail(const std::string& msg, const Line& line, int col = 1) {
  throw SpecParseError(msg, line.number, col);
}

}  // namespace

StagingSpec parse_spec(const std::string& text) {
  std::vector<Line> lines = significant_lines(text);
  StagingSpec spec;
  std::set<std::string> seen_targets;

  size_t i = 0;
  while (i < lines.size()) {
    Line& head = lines[i];
    std::istringstream hs(head.text);
    std::string kw_broadcast, kw_to, target, extra;
    hs >> kw_broadcast >> kw_to >> target;
    if (kw_broadcast != "broadcast" || kw_to != "to") {
      fail("expected 'broadcast to <dir>'", head);
    }
    if (target.empty()) fail("missing target directory", head);

    bool brace_seen = false;
    if (target == "{") fail("missing target directory before '{'", head);
    hs >> extra;
    if (extra == "{") {
      brace_seen = true;
      std::string trailing;
      if (hs >> trailing) fail("unexpected text after '{'", head);
    } else if (!extra.empty()) {
      fail("unexpected text after target directory: '" + extra + "'", head);
    }

    if (target.front() != '/') {
      fail("target directory must be absolute: '" + target + "'", head,
           static_cast<int>(head.text.find(target)) + 1);
    }
    if (!seen_targets.insert(target).second) {
      fail("duplicate target directory: '" + target + "'", head);
    }

    ++i;
    if (!brace_seen) {
      if (i >= lines.size() || lines[i].text != "{") {
        fail("expected '{' to open group", i < lines.size() ? lines[i] : head);
      }
      ++i;
    }

    BroadcastGroup group;
    group.target_dir = target;
    bool closed = false;
    while (i < lines.size()) {
      if (lines[i].text == "}") {
        closed = true;
        ++i;
        break;
      }
      const std::string& pat = lines[i].text;
      if (pat.find_first_of(" \t") != std::string::npos) {
        fail("pattern may not contain whitespace: '" + pat + "'", lines[i]);
      }
      if (pat.find("**") != std::string::npos) {
        fail("recursive '**' globs are not supported", lines[i],
             static_cast<int>(lines[i].text.find("**")) + 1);
      }
      group.patterns.push_back(pat);
      ++i;
    }
    if (!closed) fail("unterminated group (missing '}')", lines.back());
    if (group.patterns.empty()) {
      fail("group for '" + target + "' has no patterns", head);
    }
    spec.groups.push_back(std::move(group));
  }

  if (spec.groups.empty()) {
    throw SpecParseError("spec contains no broadcast groups", 1, 1);
  }
  return spec;
}

FileManifest resolve_manifest(const StagingSpec& spec, sharedfs::SharedStore& store,
                              sharedfs::Rank rank, ResolveStats* stats) {
  FileManifest manifest;
  std::set<std::string> seen_sources;
  ResolveStats rs;

  for (const BroadcastGroup& group : spec.groups) {
    std::set<std::string> group_paths;  // dedup within group, sorted
    for (const std::string& pattern : group.patterns) {
      std::vector<std::string> matches = store.glob(pattern, rank);
      rs.patterns += 1;
      rs.total_matches += matches.size();
      if (matches.empty()) {
        throw StoreError("pattern matched no files: '" + pattern + "' (target " +
                         group.target_dir + ")");
      }
      group_paths.insert(matches.begin(), matches.end());
    }
    for (const std::string& path : group_paths) {
      if (!seen_sources.insert(path).second) {
        throw StoreError("file matched by more than one broadcast group: '" + path + "'");
      }
      sharedfs::FileStat st = store.stat(path, rank);
      rs.stat_probes += 1;
      ManifestEntry e;
      e.source_path = path;
      e.target_dir = group.target_dir;
      e.size = st.size;
      e.digest = st.digest;
      manifest.total_bytes += st.size;
      manifest.entries.push_back(std::move(e));
    }
  }
  if (stats) *stats = rs;
  return manifest;
}

Bytes encode_manifest(const FileManifest& m) {
  std::ostringstream out;
  out << "stagekit-manifest v1 " << kDigestAlgorithm << '\n';
  for (const ManifestEntry& e : m.entries) {
    out << e.source_path << '\t' << e.target_dir << '\t' << e.size << '\t' << e.digest.hex()
        << '\n';
  }
  return to_bytes(out.str());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

FileManifest decode_manifest(ByteView bytes) {
  std::string text = stagekit::to_string(bytes);
  if (text.empty() || text.back() != '\n') {
    throw ManifestFormatError("manifest truncated: missing trailing newline");
  }
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  std::string expected = std::string("stagekit-manifest v1 ") + kDigestAlgorithm;
  if (header != expected) {
    throw ManifestFormatError("bad manifest header: '" + header + "' (expected '" +
                              expected + "')");
  }

  FileManifest m;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f = split_fields(line);
    if (f.size() != 4) {
      throw ManifestFormatError("manifest record must have 4 tab-separated fields, got " +
                                std::to_string(f.size()));
    }
    if (f[0].empty()) throw ManifestFormatError("manifest record has empty source path");
    ManifestEntry e;
    e.source_path = f[0];
    e.target_dir = f[1];
    size_t pos = 0;
    try {
      e.size = std::stoull(f[2], &pos);
    } catch (const std::exception&) {
      throw ManifestFormatError("bad size field: '" + f[2] + "'");
    }
    if (pos != f[2].size()) throw ManifestFormatError("bad size field: '" + f[2] + "'");
    e.digest = digest_from_hex(f[3]);
    m.total_bytes += e.size;
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace stagekit::hookspec
