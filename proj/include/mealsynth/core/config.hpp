#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mealsynth {

// Flat key=value configuration. Lookup precedence: explicit override (CLI
// flag) > environment variable MEALSYNTH_<KEY> (dots become underscores,
// uppercased) > config file > built-in default.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);      // file/default layer
  void set_override(const std::string& key, const std::string& value);  // flag layer

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& def) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Canonical serialization (sorted keys, file+override layers merged).
  std::string canonical() const;
  // FNV-1a 64 over the canonical form; stamped into checkpoints/reports.
  uint64_t hash() const;

  static std::string env_var_name(const std::string& key);

 private:
  const std::string* lookup(const std::string& key) const;
  mutable std::map<std::string, std::string> env_cache_;
  std::map<std::string, std::string> file_;
  std::map<std::string, std::string> override_;
};

uint64_t fnv1a64(const std::string& s);

}  // namespace mealsynth
