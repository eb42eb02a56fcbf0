#pragma once

#include <functional>
#include <memory>
#include <string>
#include <typeindex>
#include <typeinfo>

namespace flowgraph {

/// Runtime identity of a payload type. One descriptor exists per C++ type;
/// pointer equality is type equality.
struct PayloadTypeInfo {
  std::type_index cpp_type;
  std::string name;
  // Optional hooks used by the recording sink and the CLI. Null for types
  // that are never serialized.
  std::function<std::string(const void*)> format;
};

using PayloadTypeId = const PayloadTypeInfo*;

namespace detail {

PayloadTypeInfo* LookupOrCreateTypeInfo(std::type_index type,
                                        const char* fallback_name);

template <typename T>
PayloadTypeInfo* MutableTypeInfoOf() {
  static PayloadTypeInfo* info =
      LookupOrCreateTypeInfo(std::type_index(typeid(T)), typeid(T).name());
  return info;
}

}  // namespace detail

template <typename T>
PayloadTypeId PayloadTypeOf() {
  return detail::MutableTypeInfoOf<T>();
}

/// Gives T a human-readable name (and optionally a text formatter) for
/// diagnostics, the recording sink, and CLI payload inference. Embedding
/// programs call this for their own types; built-in types are registered
/// by the library.
template <typename T>
void RegisterPayloadType(std::string name,
                         std::function<std::string(const T&)> format = {}) {
  PayloadTypeInfo* info = detail::MutableTypeInfoOf<T>();
  info->name = std::move(name);
  if (format) {
    info->format = [fn = std::move(format)](const void* p) {
      return fn(*static_cast<const T*>(p));
    };
  }
}

/// Finds a registered type by name; null if unknown. Used by the CLI to
/// map config-declared stream types to JSON converters.
PayloadTypeId FindPayloadTypeByName(std::string_view name);

/// Registers the scalar/string/vector payload types the CLI understands.
/// Idempotent; called from library init paths that need them.
void RegisterBuiltinPayloadTypes();

}  // namespace flowgraph
