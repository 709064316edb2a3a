#pragma once

#include <string>

#include <json.hpp>

namespace conmil {
namespace jsonschema {

// Minimal structural validator covering the subset of JSON Schema the
// published schema files use: type, required, properties, items, enum,
// minimum/maximum. Returns an empty string on success, otherwise the
// first violation found (path: reason).
inline std::string validate(const nlohmann::json& value, const nlohmann::json& schema,
                            const std::string& path = "$") {
  using nlohmann::json;
  if (schema.contains("type")) {
    const std::string type = schema.at("type").get<std::string>();
    const bool ok = (type == "object" && value.is_object()) ||
                    (type == "array" && value.is_array()) ||
                    (type == "string" && value.is_string()) ||
                    (type == "number" && value.is_number()) ||
                    (type == "integer" && value.is_number_integer()) ||
                    (type == "boolean" && value.is_boolean()) || (type == "null" && value.is_null());
    if (!ok) return path + ": expected type " + type;
  }
  if (schema.contains("enum")) {
    bool hit = false;
    for (const auto& candidate : schema.at("enum"))
      if (candidate == value) hit = true;
    if (!hit) return path + ": value not in enum";
  }
  if (schema.contains("minimum") && value.is_number() &&
      value.get<double>() < schema.at("minimum").get<double>())
    return path + ": below minimum";
  if (schema.contains("maximum") && value.is_number() &&
      value.get<double>() > schema.at("maximum").get<double>())
    return path + ": above maximum";
  if (value.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema.at("required"))
        if (!value.contains(key.get<std::string>()))
          return path + ": missing required key " + key.get<std::string>();
    if (schema.contains("properties"))
      for (const auto& [key, sub] : schema.at("properties").items())
        if (value.contains(key)) {
          const std::string err = validate(value.at(key), sub, path + "." + key);
          if (!err.empty()) return err;
        }
  }
  if (value.is_array() && schema.contains("items")) {
    std::size_t i = 0;
    for (const auto& item : value) {
      const std::string err =
          validate(item, schema.at("items"), path + "[" + std::to_string(i) + "]");
      if (!err.empty()) return err;
      ++i;
    }
  }
  return "";
}

}  // namespace jsonschema
}  // namespace conmil
