#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "finmart/rational.hpp"

namespace finmart {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Declarative key = value configuration with [section] headers and '#'
// comments. Rationals use exact p/q syntax throughout.
class Config {
 public:
  static Config parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#') continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      std::string key = strip(s.substr(0, eq));
      std::string value = strip(s.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      cfg.values_[section + "." + key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string require(const std::string& section, const std::string& key) const {
    auto v = get(section, key);
    if (!v) throw ConfigError("missing config key [" + section + "] " + key);
    return *v;
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    return get(section, key).value_or(fallback);
  }

  Rational rational(const std::string& section, const std::string& key) const {
    try {
      return parse_rational(require(section, key));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("bad rational for [" + section + "] " + key + ": " + e.what());
    }
  }

  Rational rational_or(const std::string& section, const std::string& key,
                       const Rational& fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    try {
      return parse_rational(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("bad rational for [" + section + "] " + key + ": " + e.what());
    }
  }

  std::uint64_t integer(const std::string& section, const std::string& key) const {
    Rational r = rational(section, key);
    if (rat_den(r) != 1 || r < 0) throw ConfigError("[" + section + "] " + key + " must be a natural number");
    return rat_num(r).convert_to<std::uint64_t>();
  }

  std::uint64_t integer_or(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const {
    if (!get(section, key)) return fallback;
    return integer(section, key);
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  static std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace finmart
