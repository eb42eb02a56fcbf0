#include "flowgraph/options.hpp"

namespace flowgraph {

namespace {

[[noreturn]] void WrongType(const std::string& key, const char* want) {
  throw FlowError(ErrorCode::kInvalidOptions,
                  "option '" + key + "' is not " + want);
}

}  // namespace

int64_t NodeOptions::GetInt(const std::string& key, int64_t fallback) const {
  const OptionValue* v = Find(key);
  if (v == nullptr) return fallback;
  if (const auto* i = std::get_if<int64_t>(v)) return *i;
  WrongType(key, "an integer");
}

double NodeOptions::GetDouble(const std::string& key, double fallback) const {
  const OptionValue* v = Find(key);
  if (v == nullptr) return fallback;
  if (const auto* d = std::get_if<double>(v)) return *d;
  if (const auto* i = std::get_if<int64_t>(v)) return static_cast<double>(*i);
  WrongType(key, "a number");
}

std::string NodeOptions::GetString(const std::string& key,
                                   const std::string& fallback) const {
  const OptionValue* v = Find(key);
  if (v == nullptr) return fallback;
  if (const auto* s = std::get_if<std::string>(v)) return *s;
  WrongType(key, "a string");
}

bool NodeOptions::GetBool(const std::string& key, bool fallback) const {
  const OptionValue* v = Find(key);
  if (v == nullptr) return fallback;
  if (const auto* b = std::get_if<bool>(v)) return *b;
  WrongType(key, "a boolean");
}

int64_t NodeOptions::RequireInt(const std::string& key) const {
  if (!Has(key)) {
    throw FlowError(ErrorCode::kInvalidOptions,
                    "missing required option '" + key + "'");
  }
  return GetInt(key, 0);
}

std::string NodeOptions::RequireString(const std::string& key) const {
  if (!Has(key)) {
    throw FlowError(ErrorCode::kInvalidOptions,
                    "missing required option '" + key + "'");
  }
  return GetString(key, "");
}

}  // namespace flowgraph
