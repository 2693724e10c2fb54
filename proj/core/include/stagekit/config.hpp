#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace stagekit {

// Sectioned key = value text, e.g.
//
//   [cost]
//   b_fs_bytes_per_s = 240e9
//   gamma = 1.27e-3
//
// `#` starts a comment, blank lines are ignored. Keys are addressed as
// "section.key". Values are strings; typed getters parse on access.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;

  // Comma-separated lists: "1,2,4,8" / "9,1,1,1".
  std::vector<int64_t> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stagekit
