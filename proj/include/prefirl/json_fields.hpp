#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace prefirl {

/// Invalid configuration value; `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Strict reader for one JSON object: every key must be consumed by
/// `read`/`read_with`, otherwise `finish` reports it.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_.empty() ? "config" : section_, "expected a JSON object");
  }

  std::string path(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const nlohmann::json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path(key), "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) throw ConfigError(path(key), "must not be negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    }
    try {
      out = v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path(key), e.what());
    }
  }

  /// Reads a string and converts it; conversion errors name the field.
  template <class T, class Convert>
  void read_with(const std::string& key, T& out, Convert convert) {
    std::string name;
    if (!j_.contains(key)) return;
    read(key, name);
    try {
      out = convert(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path(key), e.what());
    }
  }

  /// Marks a key as handled by the caller.
  const nlohmann::json* take(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path(key), "unknown key");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace prefirl
