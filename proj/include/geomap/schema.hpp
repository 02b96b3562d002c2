#pragma once

// Per-component list of fields the extraction prompt asks for.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "geomap/error.hpp"
#include "geomap/model.hpp"

namespace geomap {

struct SchemaField {
  std::string name;
  std::string description;
  /// "text", "number" or "list".
  std::string type = "text";

  friend bool operator==(const SchemaField&, const SchemaField&) = default;
};

struct ExtractionSchema {
  std::map<ComponentKind, std::vector<SchemaField>> fields;

  const std::vector<SchemaField>& for_kind(ComponentKind k) const {
    static const std::vector<SchemaField> kNone;
    auto it = fields.find(k);
    return it == fields.end() ? kNone : it->second;
  }

  friend bool operator==(const ExtractionSchema&, const ExtractionSchema&) = default;
};

/// Metadata scalars and the schema field that feeds each of them.
inline const std::map<std::string, ComponentKind>& metadata_field_sources() {
  static const std::map<std::string, ComponentKind> m = {
      {"sheet_name", ComponentKind::title}, {"scale", ComponentKind::scale},
      {"west", ComponentKind::main_map},    {"east", ComponentKind::main_map},
      {"south", ComponentKind::main_map},   {"north", ComponentKind::main_map},
      {"neighbors", ComponentKind::index_map}};
  return m;
}

/// Every metadata scalar must come from exactly one schema entry, on the
/// component it is merged from.
inline std::vector<std::string> validate_schema(const ExtractionSchema& s) {
  std::vector<std::string> out;
  std::map<std::string, int> seen;
  for (const auto& [kind, fields] : s.fields) {
    std::set<std::string> names;
    for (const auto& f : fields) {
      if (!names.insert(f.name).second)
        out.push_back(fmt::format("{}: field '{}' listed twice", to_string(kind), f.name));
      auto src = metadata_field_sources().find(f.name);
      if (src == metadata_field_sources().end()) continue;
      ++seen[f.name];
      if (src->second != kind)
        out.push_back(fmt::format("{}: metadata field '{}' belongs to {}", to_string(kind), f.name,
                                  to_string(src->second)));
    }
  }
  for (const auto& [name, kind] : metadata_field_sources()) {
    const int n = seen[name];
    if (n != 1) out.push_back(fmt::format("metadata field '{}' produced by {} schema entries", name, n));
  }
  return out;
}

inline json schema_to_json(const ExtractionSchema& s) {
  json comps = json::object();
  for (const auto& [kind, fields] : s.fields) {
    json arr = json::array();
    for (const auto& f : fields)
      arr.push_back({{"name", f.name}, {"description", f.description}, {"type", f.type}});
    comps[std::string(to_string(kind))] = arr;
  }
  return json{{"components", comps}};
}

inline ExtractionSchema schema_from_json(const json& j) {
  ExtractionSchema s;
  for (const auto& [k, arr] : j.at("components").items()) {
    const auto kind = component_kind_from(k);
    if (!kind) throw ParseError(fmt::format("extraction schema: unknown component '{}'", k));
    auto& fields = s.fields[*kind];
    for (const auto& f : arr)
      fields.push_back({f.at("name").get<std::string>(), f.value("description", ""), f.value("type", "text")});
  }
  const auto problems = validate_schema(s);
  if (!problems.empty()) throw ParseError(fmt::format("extraction schema: {}", problems.front()));
  return s;
}

/// Built-in schema; data/extraction_schema.json carries the same content for editing.
inline const ExtractionSchema& default_schema() {
  static const ExtractionSchema s = [] {
    ExtractionSchema d;
    d.fields[ComponentKind::title] = {
        {"sheet_name", "name of the map sheet as printed in the title", "text"},
        {"authors", "authors or compiling organisation", "text"}};
    d.fields[ComponentKind::scale] = {{"scale", "scale ratio such as 1:250000", "text"}};
    d.fields[ComponentKind::main_map] = {
        {"west", "western longitude bound in decimal degrees", "number"},
        {"east", "eastern longitude bound in decimal degrees", "number"},
        {"south", "southern latitude bound in decimal degrees", "number"},
        {"north", "northern latitude bound in decimal degrees", "number"}};
    d.fields[ComponentKind::index_map] = {
        {"neighbors", "names of the adjacent map sheets", "list"}};
    d.fields[ComponentKind::cross_section] = {
        {"section_line", "label of the section line, such as A-A'", "text"}};
    d.fields[ComponentKind::stratigraphic_column] = {
        {"unit_count", "number of units shown in the column", "number"}};
    return d;
  }();
  return s;
}

}  // namespace geomap
