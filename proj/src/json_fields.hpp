#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "ptgan/errors.hpp"

namespace ptgan::detail {

inline void require_known_keys(const nlohmann::json& j, const std::set<std::string>& known,
                               const std::string& prefix) {
  if (!j.is_object()) throw InvalidConfig((prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw InvalidConfig((prefix.empty() ? "" : prefix + ".") + key + ": unknown field");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& prefix = {}) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidConfig((prefix.empty() ? "" : prefix + ".") + key + ": wrong type");
  }
}

inline nlohmann::json parse_config_text(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidConfig(std::string("config: not valid JSON (") + e.what() + ")");
  }
}

}  // namespace ptgan::detail
