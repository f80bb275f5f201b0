#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "cade/error.hpp"

namespace cade {

/// Reads known keys from a JSON object and rejects anything else, reporting
/// the dotted key path of the first offending entry.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_, "expected an object");
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  /// Returns the value for `key` or nullptr; marks the key as consumed.
  const nlohmann::json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const auto* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path(key), e.what());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path(it.key()), "unknown key");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace cade
