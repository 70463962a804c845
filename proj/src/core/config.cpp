#include "mealsynth/core/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mealsynth/core/errors.hpp"

namespace mealsynth {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + t);
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty config key on line " + std::to_string(lineno));
    cfg.file_[key] = val;
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) { file_[key] = value; }

void Config::set_override(const std::string& key, const std::string& value) {
  override_[key] = value;
}

std::string Config::env_var_name(const std::string& key) {
  std::string name = "MEALSYNTH_";
  for (char c : key) {
    if (c == '.' || c == '-')
      name += '_';
    else
      name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

const std::string* Config::lookup(const std::string& key) const {
  if (auto it = override_.find(key); it != override_.end()) return &it->second;
  if (auto it = env_cache_.find(key); it != env_cache_.end()) return &it->second;
  if (const char* env = std::getenv(env_var_name(key).c_str())) {
    env_cache_[key] = env;
    return &env_cache_[key];
  }
  if (auto it = file_.find(key); it != file_.end()) return &it->second;
  return nullptr;
}

bool Config::has(const std::string& key) const { return lookup(key) != nullptr; }

std::string Config::get(const std::string& key, const std::string& def) const {
  const std::string* v = lookup(key);
  return v ? *v : def;
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
  const std::string* v = lookup(key);
  if (!v) return def;
  try {
    size_t pos = 0;
    int64_t r = std::stoll(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + *v);
  }
}

double Config::get_double(const std::string& key, double def) const {
  const std::string* v = lookup(key);
  if (!v) return def;
  try {
    size_t pos = 0;
    double r = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + *v);
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  const std::string* v = lookup(key);
  if (!v) return def;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + *v);
}

std::string Config::canonical() const {
  std::map<std::string, std::string> merged = file_;
  for (const auto& [k, v] : override_) merged[k] = v;
  std::string out;
  for (const auto& [k, v] : merged) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

uint64_t Config::hash() const { return fnv1a64(canonical()); }

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mealsynth
