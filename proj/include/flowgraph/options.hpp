#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include "flowgraph/error.hpp"

namespace flowgraph {

using OptionValue = std::variant<int64_t, double, std::string, bool>;

/// Flat key -> scalar map from a node's `options { }` block.
class NodeOptions {
 public:
  NodeOptions() = default;

  void Set(const std::string& key, OptionValue value) {
    values_[key] = std::move(value);
  }

  bool Has(const std::string& key) const { return values_.count(key) > 0; }

  int64_t GetInt(const std::string& key, int64_t fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  std::string GetString(const std::string& key,
                        const std::string& fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  /// Variants that treat a missing key as InvalidOptions.
  int64_t RequireInt(const std::string& key) const;
  std::string RequireString(const std::string& key) const;

  const std::map<std::string, OptionValue>& values() const { return values_; }
  bool operator==(const NodeOptions& other) const = default;

 private:
  const OptionValue* Find(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  std::map<std::string, OptionValue> values_;
};

}  // namespace flowgraph
