#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "toder/core/error.hpp"

namespace toder {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Environment variable name overriding a config key: "stage1.epochs" -> "TODER_STAGE1_EPOCHS".
inline std::string env_name_for_key(const std::string& key) {
  std::string out = "TODER_";
  for (char c : key) {
    out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                                                       : '_';
  }
  return out;
}

/// Flat "key = value" text file with '#' comments. Lines without '=' are kept as table rows.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(std::istream& in, const std::string& source) {
    KeyValueFile kv;
    kv.source_ = source;
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        kv.rows_.push_back({n, t});
        continue;
      }
      const std::string key = trim(std::string_view(t).substr(0, eq));
      if (key.empty()) throw ParseError(source + ":" + std::to_string(n) + ": empty key");
      kv.set(key, trim(std::string_view(t).substr(eq + 1)));
    }
    return kv;
  }

  static KeyValueFile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse(in, path.string());
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = value;
  }

  [[nodiscard]] bool contains(const std::string& key) const { return values_.contains(key); }

  [[nodiscard]] std::optional<std::string> raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }

  [[nodiscard]] std::string require_string(const std::string& key) const {
    auto v = raw(key);
    if (!v) throw ValidationError(source_ + ": missing key '" + key + "'");
    return *v;
  }

  template <typename T>
  [[nodiscard]] T get(const std::string& key, T fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    return convert<T>(key, *v);
  }

  template <typename T>
  [[nodiscard]] T require(const std::string& key) const {
    return convert<T>(key, require_string(key));
  }

  /// Replaces values with TODER_* environment variables for every known key plus `extra_keys`.
  void apply_env_overrides(const std::vector<std::string>& extra_keys = {}) {
    std::vector<std::string> keys = order_;
    keys.insert(keys.end(), extra_keys.begin(), extra_keys.end());
    for (const auto& key : keys) {
      if (const char* env = std::getenv(env_name_for_key(key).c_str())) set(key, env);
    }
  }

  void write(std::ostream& out) const {
    for (const auto& key : order_) out << key << " = " << values_.at(key) << '\n';
  }

  struct Row {
    size_t line = 0;
    std::string text;
  };
  [[nodiscard]] const std::vector<Row>& rows() const { return rows_; }
  [[nodiscard]] const std::vector<std::string>& keys() const { return order_; }
  [[nodiscard]] const std::string& source() const { return source_; }

 private:
  template <typename T>
  T convert(const std::string& key, const std::string& value) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return value;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
      if (value == "false" || value == "0" || value == "off" || value == "no") return false;
      throw ValidationError(source_ + ": key '" + key + "' expects a boolean, got '" + value + "'");
    } else {
      std::istringstream in(value);
      T out{};
      in >> out;
      std::string rest;
      if (in.fail() || (in >> rest)) {
        throw ValidationError(source_ + ": key '" + key + "' has invalid value '" + value + "'");
      }
      return out;
    }
  }

  std::string source_ = "<memory>";
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  std::vector<Row> rows_;
};

}  // namespace toder
