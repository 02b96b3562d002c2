#pragma once

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/backend.hpp"
#include "geomap/error.hpp"
#include "geomap/geodb.hpp"
#include "geomap/lithology.hpp"
#include "geomap/model.hpp"
#include "geomap/prompts.hpp"
#include "geomap/reply.hpp"
#include "geomap/schema.hpp"

namespace geomap {

inline constexpr std::size_t kMaxQuakeEvents = 50;

struct Provenance {
  std::string source;
  std::string query;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct KnowledgeEntry {
  std::string expert;
  std::string kind;
  json payload;
  Provenance provenance;
  friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

struct KnowledgePacket {
  std::vector<KnowledgeEntry> entries;
  std::vector<std::string> warnings;

  bool empty() const { return entries.empty(); }
  friend bool operator==(const KnowledgePacket&, const KnowledgePacket&) = default;
};

inline void to_json(json& j, const KnowledgeEntry& e) {
  j = json{{"expert", e.expert}, {"kind", e.kind}, {"payload", e.payload},
           {"provenance", {{"source", e.provenance.source}, {"query", e.provenance.query}}}};
}
inline void from_json(const json& j, KnowledgeEntry& e) {
  e.expert = j.at("expert").get<std::string>();
  e.kind = j.at("kind").get<std::string>();
  e.payload = j.at("payload");
  e.provenance = {j.at("provenance").value("source", ""), j.at("provenance").value("query", "")};
}
inline void to_json(json& j, const KnowledgePacket& p) {
  j = json{{"entries", p.entries}, {"warnings", p.warnings}};
}
inline void from_json(const json& j, KnowledgePacket& p) {
  p.entries = j.at("entries").get<std::vector<KnowledgeEntry>>();
  p.warnings = j.value("warnings", std::vector<std::string>{});
}

/// Read-only resources the experts consult.
struct ToolPool {
  std::shared_ptr<const Snapshots> snapshots;
  const LithologyTable* lithology = &default_lithology_table();
  const ExtractionSchema* schema = &default_schema();
  const std::vector<AgeUnit>* ages = &default_age_table();
};

struct KindSpec {
  std::string tag;
  std::string description;
  /// Needs the map's lon-lat range.
  bool geo_keyed = false;
};

struct Expert {
  std::string name;
  std::vector<KindSpec> kinds;
  /// Produce the payload for one offered kind; geo-keyed kinds receive a range.
  std::function<json(const std::string& kind, const std::optional<LonLatRange>& range,
                     const ToolPool& tools, Provenance& provenance)>
      provide;
};

class ExpertRegistry {
 public:
  ExpertRegistry& add(Expert e) {
    for (const auto& k : e.kinds)
      if (owner(k.tag))
        throw DefinitionError(fmt::format("knowledge kind '{}' already offered by {}", k.tag, owner(k.tag)->name));
    experts_.push_back(std::move(e));
    return *this;
  }
  const std::vector<Expert>& experts() const { return experts_; }
  const Expert* owner(std::string_view kind) const {
    for (const auto& e : experts_)
      for (const auto& k : e.kinds)
        if (k.tag == kind) return &e;
    return nullptr;
  }
  const Expert* find(std::string_view name) const {
    for (const auto& e : experts_)
      if (e.name == name) return &e;
    return nullptr;
  }

 private:
  std::vector<Expert> experts_;
};

inline std::string range_query(const LonLatRange& r) {
  return fmt::format("west={} east={} south={} north={}", format_number(r.west), format_number(r.east),
                     format_number(r.south), format_number(r.north));
}

namespace detail {
inline const Snapshots& need_snapshots(const ToolPool& tools) {
  if (!tools.snapshots) throw ToolError("no snapshot directory configured");
  return *tools.snapshots;
}
}  // namespace detail

inline Expert make_geologist() {
  return {"geologist",
          {{"component_schema", "composition of a geologic map and the information held by each component", false},
           {"lithology_table", "3-level lithological table (class, subclass, lithology)", false},
           {"stratigraphic_age", "table of stratigraphic ages (eon, era, period, epoch)", false}},
          [](const std::string& kind, const std::optional<LonLatRange>&, const ToolPool& tools,
             Provenance& prov) -> json {
            if (kind == "component_schema") {
              prov = {"extraction_schema", "all"};
              return schema_to_json(*tools.schema);
            }
            if (kind == "lithology_table") {
              prov = {"lithology_table", std::string(to_string(tools.lithology->language()))};
              return tools.lithology->to_json();
            }
            prov = {"stratigraphic_age_table", "all"};
            return json(*tools.ages);
          }};
}

inline Expert make_geographer() {
  return {"geographer",
          {{"land_cover", "land-cover class histogram over the map area", true},
           {"population_density", "total population over the map area", true}},
          [](const std::string& kind, const std::optional<LonLatRange>& range, const ToolPool& tools,
             Provenance& prov) -> json {
            const auto& snap = detail::need_snapshots(tools);
            const bool cover = kind == "land_cover";
            const std::string name = cover ? "landcover" : "population";
            prov = {name + ".bin", range_query(*range)};
            return raster_stats(snap.raster(name), *range, cover ? RasterMode::histogram : RasterMode::sum);
          }};
}

inline Expert make_seismologist() {
  return {"seismologist",
          {{"historical_earthquakes", "earthquakes of magnitude above 2.5 since 1970 inside the map area", true},
           {"active_faults", "active faults crossing the map area", true}},
          [](const std::string& kind, const std::optional<LonLatRange>& range, const ToolPool& tools,
             Provenance& prov) -> json {
            const auto& snap = detail::need_snapshots(tools);
            if (kind == "historical_earthquakes") {
              prov = {"quakes.csv", range_query(*range) + " mag>2.5 year>=1970"};
              const auto hits = query_quakes(snap.quakes(), *range);
              json events = json::array();
              for (std::size_t i = 0; i < hits.size() && i < kMaxQuakeEvents; ++i) events.push_back(hits[i]);
              return json{{"count", hits.size()},
                          {"max_magnitude", hits.empty() ? json(nullptr) : json(hits.front().magnitude)},
                          {"events", events}};
            }
            prov = {"faults.json", range_query(*range)};
            const auto hits = query_faults(snap.faults(), *range);
            return json{{"count", hits.size()}, {"faults", hits}};
          }};
}

inline ExpertRegistry default_expert_group() {
  ExpertRegistry r;
  r.add(make_geologist()).add(make_geographer()).add(make_seismologist());
  return r;
}

/// Entries for the requested kinds this expert offers, in offer order. Geo-keyed
/// kinds are skipped with a warning when the range is unknown.
inline KnowledgePacket consult(const Expert& expert, const std::set<std::string>& kinds,
                               const MapMetadata& meta, const ToolPool& tools) {
  KnowledgePacket packet;
  for (const auto& k : expert.kinds) {
    if (!kinds.count(k.tag)) continue;
    if (k.geo_keyed && (!meta.lonlat || !meta.lonlat->valid())) {
      packet.warnings.push_back(
          fmt::format("{}: {} skipped, map {} has no lon-lat range", expert.name, k.tag, meta.map_id));
      continue;
    }
    KnowledgeEntry e{expert.name, k.tag, nullptr, {}};
    e.payload = expert.provide(k.tag, meta.lonlat, tools, e.provenance);
    packet.entries.push_back(std::move(e));
  }
  return packet;
}

inline KnowledgePacket consult_all(const ExpertRegistry& registry, const std::set<std::string>& kinds,
                                   const MapMetadata& meta, const ToolPool& tools) {
  KnowledgePacket packet;
  for (const auto& expert : registry.experts()) {
    auto part = consult(expert, kinds, meta, tools);
    for (auto& e : part.entries) packet.entries.push_back(std::move(e));
    for (auto& w : part.warnings) packet.warnings.push_back(std::move(w));
  }
  return packet;
}

struct GateResult {
  std::set<std::string> kinds;
  std::vector<std::string> warnings;
};

inline std::string gate_prompt(const Expert& expert, std::string_view question) {
  std::string lines;
  json example = json::object();
  for (const auto& k : expert.kinds) {
    lines += fmt::format("- {}: {}\n", k.tag, k.description);
    example[k.tag] = "no";
  }
  return prompts::render(prompts::kGate, {{"expert", expert.name},
                                          {"question", std::string(question)},
                                          {"kinds", lines},
                                          {"example", example.dump()}});
}

inline bool affirmed(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = normalize_text(v.get<std::string>());
    return s == "yes" || s == "true" || s == "y";
  }
  return false;
}

/// One call per expert asking yes/no for each offered kind; the union of
/// affirmed kinds. Any backend or parse failure yields the empty set.
inline GateResult gate(const BenchItem& item, const ExpertRegistry& registry, Backend& backend) {
  GateResult result;
  for (const auto& expert : registry.experts()) {
    CompletionRequest req;
    req.instruction = gate_prompt(expert, item.question_text);
    json kinds = json::array();
    for (const auto& k : expert.kinds) kinds.push_back(k.tag);
    req.hints = {{"purpose", "gate"}, {"item_id", item.id}, {"map_id", item.map_id},
                 {"task", std::string(to_string(item.task))}, {"expert", expert.name}, {"kinds", kinds}};
    try {
      const auto reply = extract_json_object(backend.complete(req));
      if (!reply) throw ParseError("gate reply is not a JSON object");
      for (const auto& k : expert.kinds)
        if (auto it = reply->value.find(k.tag); it != reply->value.end() && affirmed(*it))
          result.kinds.insert(k.tag);
    } catch (const Error& e) {
      const auto msg = fmt::format("{}: gate by {} failed, no knowledge injected: {}", item.id, expert.name, e.what());
      spdlog::warn("{}", msg);
      return {{}, {msg}};
    }
  }
  return result;
}

}  // namespace geomap
