#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "dal/common/error.hpp"

namespace dal {

using Json = nlohmann::json;

/// Reads fields out of a JSON object, remembering which keys were consumed so
/// that leftovers can be rejected.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  template <class T>
  void require(const std::string& key, T& out) {
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing key '" + key + "'");
    get(key, out);
  }
  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string path(const std::string& key) const { return where_ + "." + key; }

  /// Throws ConfigError naming the first key that was never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace dal
