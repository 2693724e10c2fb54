#include "stagekit/sharedfs.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "stagekit/errors.hpp"
#include "stagekit/rng.hpp"

namespace fs = std::filesystem;

namespace stagekit::sharedfs {

// ---------------------------------------------------------------- ledger

void IoLedger::add_read(Rank rank, uint64_t bytes) {
  std::lock_guard lock(mu_);
  auto& c = ranks_[rank];
  c.data_bytes_read += bytes;
  c.data_read_ops += 1;
  c.opens += 1;
}

void IoLedger::add_glob(Rank rank) {
  std::lock_guard lock(mu_);
  ranks_[rank].glob_ops += 1;
}

void IoLedger::add_stat(Rank rank) {
  std::lock_guard lock(mu_);
  auto& c = ranks_[rank];
  c.stat_ops += 1;
  c.opens += 1;
}

void IoLedger::reset() {
  std::lock_guard lock(mu_);
  ranks_.clear();
}

IoCounters IoLedger::totals() const {
  std::lock_guard lock(mu_);
  IoCounters t;
  for (const auto& [rank, c] : ranks_) {
    t.data_bytes_read += c.data_bytes_read;
    t.data_read_ops += c.data_read_ops;
    t.glob_ops += c.glob_ops;
    t.stat_ops += c.stat_ops;
    t.opens += c.opens;
  }
  return t;
}

std::map<Rank, IoCounters> IoLedger::per_rank() const {
  std::lock_guard lock(mu_);
  return ranks_;
}

std::string IoLedger::to_csv() const {
  std::ostringstream out;
  out << "rank,data_bytes_read,data_read_ops,glob_ops,stat_ops,opens\n";
  for (const auto& [rank, c] : per_rank()) {
    out << rank << ',' << c.data_bytes_read << ',' << c.data_read_ops << ',' << c.glob_ops
        << ',' << c.stat_ops << ',' << c.opens << '\n';
  }
  return out.str();
}

// ------------------------------------------------------------- glob match

void validate_glob_pattern(const std::string& pattern) {
  if (pattern.empty()) throw StoreError("empty glob pattern");
  if (pattern.find("**") != std::string::npos) {
    throw StoreError("recursive '**' globs are not supported: " + pattern);
  }
  // Unbalanced character class is the one malformed case fnmatch accepts
  // silently (treats '[' as literal); reject it instead.
  int depth = 0;
  for (char c : pattern) {
    if (c == '[') ++depth;
    if (c == ']' && depth > 0) --depth;
  }
  if (depth != 0) throw StoreError("unbalanced '[' in glob pattern: " + pattern);
}

bool glob_match(const std::string& pattern, const std::string& path) {
  return fnmatch(pattern.c_str(), path.c_str(), FNM_PATHNAME) == 0;
}

// -------------------------------------------------------------- RealStore

RealStore::RealStore(std::string root) : root_(std::move(root)) {
  if (!fs::is_directory(root_)) throw StoreError("store root is not a directory: " + root_);
}

std::string RealStore::full_path(const std::string& rel) const {
  return root_ + "/" + rel;
}

std::vector<std::string> RealStore::glob(const std::string& pattern, Rank rank) {
  validate_glob_pattern(pattern);
  std::vector<std::string> out;
  for (auto it = fs::recursive_directory_iterator(root_);
       it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file()) continue;
    std::string rel = fs::relative(it->path(), root_).generic_string();
    if (glob_match(pattern, rel)) out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  ledger_.add_glob(rank);
  return out;
}

FileStat RealStore::stat(const std::string& path, Rank rank) {
  std::string full = full_path(path);
  std::FILE* f = std::fopen(full.c_str(), "rb");
  if (!f) throw StoreError("no such file in store: " + path);
  FileStat st;
  Sha256 hash;
  std::vector<uint8_t> buf(1 << 20);
  size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), f)) > 0) {
    hash.update(buf.data(), n);
    st.size += n;
  }
  bool err = std::ferror(f);
  std::fclose(f);
  if (err) throw StoreError("read error while hashing: " + path);
  st.digest = hash.finish();
  ledger_.add_stat(rank);
  return st;
}

Bytes RealStore::read_range(const std::string& path, uint64_t offset, uint64_t length,
                            Rank rank) {
  std::string full = full_path(path);
  std::FILE* f = std::fopen(full.c_str(), "rb");
  if (!f) throw StoreError("no such file in store: " + path);
  uint64_t size = 0;
  std::fseek(f, 0, SEEK_END);
  size = static_cast<uint64_t>(std::ftell(f));
  if (offset > size || offset + length > size) {
    std::fclose(f);
    throw StoreError("out-of-range read of " + path + " at offset " +
                     std::to_string(offset) + " length " + std::to_string(length));
  }
  Bytes out(length);
  if (length > 0) {
    std::fseek(f, static_cast<long>(offset), SEEK_SET);
    size_t got = std::fread(out.data(), 1, length, f);
    if (got != length) {
      std::fclose(f);
      throw StoreError("short read of " + path);
    }
  }
  std::fclose(f);
  if (length > 0) ledger_.add_read(rank, length);
  return out;
}

bool RealStore::exists(const std::string& path) {
  return fs::is_regular_file(full_path(path));
}

// --------------------------------------------------------------- SimStore

SimStore::SimStore(uint64_t content_seed) : seed_(content_seed) {}

void SimStore::add_file(const std::string& path, uint64_t size) {
  Entry e;
  e.size = size;
  e.key = mix64(seed_ ^ fnv1a64(path));
  files_[path] = std::move(e);
}

const SimStore::Entry& SimStore::entry(const std::string& path) const {
  auto it = files_.find(path);
  if (it == files_.end()) throw StoreError("no such file in store: " + path);
  return it->second;
}

std::vector<std::string> SimStore::glob(const std::string& pattern, Rank rank) {
  validate_glob_pattern(pattern);
  std::vector<std::string> out;
  for (const auto& [path, e] : files_) {
    if (glob_match(pattern, path)) out.push_back(path);
  }
  // files_ is an ordered map, already lexicographic
  ledger_.add_glob(rank);
  return out;
}

FileStat SimStore::stat(const std::string& path, Rank rank) {
  const Entry& e = entry(path);
  FileStat st;
  st.size = e.size;
  {
    std::lock_guard lock(digest_mu_);
    if (!e.digest) {
      Sha256 hash;
      std::vector<uint8_t> buf(1 << 20);
      uint64_t off = 0;
      while (off < e.size) {
        size_t n = static_cast<size_t>(std::min<uint64_t>(buf.size(), e.size - off));
        fill_stream(e.key, off, buf.data(), n);
        hash.update(buf.data(), n);
        off += n;
      }
      e.digest = hash.finish();
    }
    st.digest = *e.digest;
  }
  ledger_.add_stat(rank);
  return st;
}

Bytes SimStore::read_range(const std::string& path, uint64_t offset, uint64_t length,
                           Rank rank) {
  const Entry& e = entry(path);
  if (offset > e.size || offset + length > e.size) {
    throw StoreError("out-of-range read of " + path + " at offset " +
                     std::to_string(offset) + " length " + std::to_string(length));
  }
  Bytes out = stream_bytes(e.key, offset, length);
  if (length > 0) ledger_.add_read(rank, length);
  return out;
}

bool SimStore::exists(const std::string& path) { return files_.count(path) > 0; }

Bytes SimStore::peek_content(const std::string& path, uint64_t offset, uint64_t length) const {
  const Entry& e = entry(path);
  if (offset > e.size || offset + length > e.size) {
    throw StoreError("out-of-range read of " + path);
  }
  return stream_bytes(e.key, offset, length);
}

uint64_t SimStore::file_size(const std::string& path) const { return entry(path).size; }

void SimStore::charge_full_read(const std::string& path, Rank rank) {
  const Entry& e = entry(path);
  if (e.size > 0) ledger_.add_read(rank, e.size);
}

}  // namespace stagekit::sharedfs
