#ifndef TSDIFF_CONFIG_HPP
#define TSDIFF_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsdiff {

// Flat "key = value" config with dotted section keys, '#' comments and
// deterministic (sorted) serialization. Typed getters record which keys were
// consumed so commands can reject unknown keys.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse_string(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string stripped = strip(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected 'key = value', got '" + stripped + "'");
      const std::string key = strip(stripped.substr(0, eq));
      const std::string value = strip(stripped.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
      cfg.kv_[key] = value;
    }
    return cfg;
  }

  static ConfigMap parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
    return out.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path);
    out << serialize();
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_int(const std::string& key, std::int64_t v) { kv_[key] = std::to_string(v); }
  void set_real(const std::string& key, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv_[key] = buf;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    consumed_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::invalid_argument("missing required config key: " + key);
    return it->second;
  }

  double get_real(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
      consumed_.insert(key);
      return fallback;
    }
    return parse_real(key, it->second);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
      consumed_.insert(key);
      return fallback;
    }
    return parse_int(key, it->second);
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
      consumed_.insert(key);
      return fallback;
    }
    consumed_.insert(key);
    std::uint64_t out = 0;
    const auto& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw std::invalid_argument("config key " + key + ": not an unsigned integer: '" + s + "'");
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
      consumed_.insert(key);
      return fallback;
    }
    consumed_.insert(key);
    const std::string& s = it->second;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("config key " + key + ": not a boolean: '" + s + "'");
  }

  // Keys present in the file but never consumed by a typed getter.
  std::vector<std::string> unconsumed() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_)
      if (!consumed_.count(k)) out.push_back(k);
    return out;
  }

  void reject_unknown_keys() const {
    const auto leftover = unconsumed();
    if (!leftover.empty()) {
      std::string msg = "unknown config key(s):";
      for (const auto& k : leftover) msg += " " + k;
      throw std::invalid_argument(msg);
    }
  }

  bool operator==(const ConfigMap& other) const { return kv_ == other.kv_; }

 private:
  static std::string strip(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
  }

  double parse_real(const std::string& key, const std::string& s) const {
    consumed_.insert(key);
    double out = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw std::invalid_argument("config key " + key + ": not a number: '" + s + "'");
    return out;
  }

  std::int64_t parse_int(const std::string& key, const std::string& s) const {
    consumed_.insert(key);
    std::int64_t out = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw std::invalid_argument("config key " + key + ": not an integer: '" + s + "'");
    return out;
  }

  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> consumed_;
};

}  // namespace tsdiff

#endif  // TSDIFF_CONFIG_HPP
