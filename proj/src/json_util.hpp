#pragma once

// Helpers for strict reading of nlohmann::json documents. Every accessor takes
// the dotted path of the value so errors name the offending field.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string>
#include <string_view>

#include <json.hpp>

#include "edgetel/error.hpp"

namespace edgetel::detail {

using nlohmann::json;

inline std::string join_path(std::string_view parent, std::string_view key) {
  if (parent.empty()) return std::string(key);
  std::string out(parent);
  out += '.';
  out += key;
  return out;
}

inline json parse_json(std::string_view bytes) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.byte, e.what());
  } catch (const json::exception& e) {
    // Out-of-range numbers carry no position.
    throw ParseError(0, e.what());
  }
}

// Rejects keys outside `allowed` and requires every key in `required`.
inline void check_keys(const json& obj, std::string_view path,
                       std::initializer_list<std::string_view> required,
                       std::initializer_list<std::string_view> optional = {}) {
  if (!obj.is_object()) {
    throw SchemaError(path.empty() ? "<root>" : std::string(path), "expected object");
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) throw SchemaError(join_path(path, key), "missing field");
  }
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const auto& k : required) known = known || k == key;
    for (const auto& k : optional) known = known || k == key;
    if (!known) throw SchemaError(join_path(path, key), "unknown field");
  }
}

inline const json& member(const json& obj, std::string_view path, std::string_view key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(join_path(path, key), "missing field");
  return *it;
}

inline double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw SchemaError(path, "expected number");
  return v.get<double>();
}

inline std::uint64_t as_u64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    // Values built in code rather than parsed are stored signed.
    if (v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ValidationError(path, "must be non-negative");
  }
  throw SchemaError(path, "expected non-negative integer");
}

inline std::int64_t as_i64(const json& v, const std::string& path) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  throw SchemaError(path, "expected integer");
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path, "expected string");
  return v.get<std::string>();
}

inline bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw SchemaError(path, "expected boolean");
  return v.get<bool>();
}

inline double get_double(const json& obj, std::string_view path, std::string_view key) {
  return as_double(member(obj, path, key), join_path(path, key));
}

inline std::uint64_t get_u64(const json& obj, std::string_view path, std::string_view key) {
  return as_u64(member(obj, path, key), join_path(path, key));
}

inline std::string get_string(const json& obj, std::string_view path, std::string_view key) {
  return as_string(member(obj, path, key), join_path(path, key));
}

template <typename T>
T value_or(const json& obj, std::string_view path, std::string_view key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  const std::string p = join_path(path, key);
  if constexpr (std::is_same_v<T, double>) {
    return as_double(*it, p);
  } else if constexpr (std::is_same_v<T, bool>) {
    return as_bool(*it, p);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return as_string(*it, p);
  } else if constexpr (std::is_unsigned_v<T>) {
    const std::uint64_t v = as_u64(*it, p);
    if (v > std::numeric_limits<T>::max()) throw ValidationError(p, "out of range");
    return static_cast<T>(v);
  } else {
    return static_cast<T>(as_i64(*it, p));
  }
}

// Quoted, escaped JSON string. Invalid UTF-8 is replaced rather than thrown.
inline std::string quote(std::string_view s) {
  return json(std::string(s)).dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace edgetel::detail
