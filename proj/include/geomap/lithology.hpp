#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "geomap/error.hpp"
#include "geomap/model.hpp"
#include "geomap/text.hpp"

namespace geomap {

/// Level-1 classes in table order; ties between classes resolve to the earlier one.
inline constexpr std::array<std::string_view, 4> kLithologyClasses = {"Sedimentary", "Volcanic",
                                                                      "Intrusive", "Metamorphic"};

struct LithologyRow {
  std::string cls;
  std::string subclass;
  std::string lithology;

  friend bool operator==(const LithologyRow&, const LithologyRow&) = default;
};

inline void to_json(json& j, const LithologyRow& r) {
  j = json{{"class", r.cls}, {"subclass", r.subclass}, {"lithology", r.lithology}};
}
inline void from_json(const json& j, LithologyRow& r) {
  r.cls = j.at("class").get<std::string>();
  r.subclass = j.at("subclass").get<std::string>();
  r.lithology = j.at("lithology").get<std::string>();
}

struct LithologyMatch {
  std::string cls;
  std::string subclass;
  std::string lithology;
  bool exact = true;

  friend bool operator==(const LithologyMatch&, const LithologyMatch&) = default;
};

class LithologyTable {
 public:
  LithologyTable() = default;
  LithologyTable(Language language, std::vector<LithologyRow> rows)
      : language_(language), rows_(std::move(rows)) {
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::map<std::string, std::string> class_of;
    for (const auto& r : rows_) {
      if (!seen.emplace(r.cls, r.subclass, r.lithology).second)
        throw DefinitionError(fmt::format("duplicate lithology row {}/{}/{}", r.cls, r.subclass, r.lithology));
      const auto key = ascii_lower(r.lithology);
      auto [it, fresh] = class_of.emplace(key, r.cls);
      if (!fresh && it->second != r.cls)
        throw DefinitionError(fmt::format("lithology '{}' listed under two classes", r.lithology));
    }
  }

  Language language() const { return language_; }
  const std::vector<LithologyRow>& rows() const { return rows_; }

  /// Case-insensitive exact match on the lithology column; otherwise the
  /// longest table entry contained in `name` (earliest row on equal length).
  std::optional<LithologyMatch> lookup(std::string_view name) const {
    const std::string key = ascii_lower(collapse_whitespace(name));
    if (key.empty()) return std::nullopt;
    for (const auto& r : rows_)
      if (ascii_lower(r.lithology) == key) return LithologyMatch{r.cls, r.subclass, r.lithology, true};
    const LithologyRow* best = nullptr;
    for (const auto& r : rows_) {
      const auto entry = ascii_lower(r.lithology);
      if (entry.empty() || key.find(entry) == std::string::npos) continue;
      if (!best || entry.size() > best->lithology.size()) best = &r;
    }
    if (!best) return std::nullopt;
    return LithologyMatch{best->cls, best->subclass, best->lithology, false};
  }

  json to_json() const {
    return json{{"language", std::string(geomap::to_string(language_))}, {"rows", rows_}};
  }

  static LithologyTable from_json(const json& j) {
    const auto lang = j.value("language", "English") == "Chinese" ? Language::Chinese : Language::English;
    return LithologyTable(lang, j.at("rows").get<std::vector<LithologyRow>>());
  }

 private:
  Language language_ = Language::English;
  std::vector<LithologyRow> rows_;
};

inline std::optional<LithologyMatch> lookup_lithology(std::string_view name, const LithologyTable& table) {
  return table.lookup(name);
}

namespace detail {
struct RawRow {
  std::string_view cls, subclass, lithology;
};

inline constexpr RawRow kEnglishRows[] = {
    {"Sedimentary", "Clastic", "conglomerate"},
    {"Sedimentary", "Clastic", "tillite"},
    {"Sedimentary", "Clastic", "breccia"},
    {"Sedimentary", "Clastic", "sandstone"},
    {"Sedimentary", "Clastic", "quartz sandstone"},
    {"Sedimentary", "Clastic", "arkose"},
    {"Sedimentary", "Clastic", "greywacke"},
    {"Sedimentary", "Clastic", "siltstone"},
    {"Sedimentary", "Clastic", "mudstone"},
    {"Sedimentary", "Clastic", "shale"},
    {"Sedimentary", "Clastic", "claystone"},
    {"Sedimentary", "Clastic", "alluvium"},
    {"Sedimentary", "Clastic", "glacial till"},
    {"Sedimentary", "Carbonate", "limestone"},
    {"Sedimentary", "Carbonate", "marl"},
    {"Sedimentary", "Carbonate", "dolomite"},
    {"Sedimentary", "Carbonate", "oolitic limestone"},
    {"Sedimentary", "Carbonate", "bioclastic limestone"},
    {"Sedimentary", "Carbonate", "chalk"},
    {"Sedimentary", "Carbonate", "travertine"},
    {"Sedimentary", "Chemical", "chert"},
    {"Sedimentary", "Chemical", "gypsum"},
    {"Sedimentary", "Chemical", "rock salt"},
    {"Sedimentary", "Chemical", "banded iron formation"},
    {"Sedimentary", "Chemical", "phosphorite"},
    {"Sedimentary", "Organic", "coal"},
    {"Sedimentary", "Organic", "oil shale"},
    {"Sedimentary", "Pyroclastic sedimentary", "tuffaceous sandstone"},
    {"Volcanic", "Acid volcanic", "trachydacite"},
    {"Volcanic", "Acid volcanic", "keratophyre"},
    {"Volcanic", "Acid volcanic", "quartz keratophyre"},
    {"Volcanic", "Acid volcanic", "rhyolite"},
    {"Volcanic", "Acid volcanic", "dacite"},
    {"Volcanic", "Acid volcanic", "obsidian"},
    {"Volcanic", "Alkali volcanic", "analcimite"},
    {"Volcanic", "Alkali volcanic", "leucitite"},
    {"Volcanic", "Alkali volcanic", "phonolite"},
    {"Volcanic", "Alkali volcanic", "trachyte"},
    {"Volcanic", "Alkali volcanic", "nephelinite"},
    {"Volcanic", "Intermediate volcanic", "andesite"},
    {"Volcanic", "Intermediate volcanic", "trachyandesite"},
    {"Volcanic", "Intermediate volcanic", "porphyrite"},
    {"Volcanic", "Basic volcanic", "basalt"},
    {"Volcanic", "Basic volcanic", "olivine basalt"},
    {"Volcanic", "Basic volcanic", "spilite"},
    {"Volcanic", "Basic volcanic", "picrite"},
    {"Volcanic", "Volcaniclastic", "tuff"},
    {"Volcanic", "Volcaniclastic", "welded tuff"},
    {"Volcanic", "Volcaniclastic", "volcanic breccia"},
    {"Volcanic", "Volcaniclastic", "agglomerate"},
    {"Intrusive", "Acid intrusive", "tonalite"},
    {"Intrusive", "Acid intrusive", "plagiogranite"},
    {"Intrusive", "Acid intrusive", "granite"},
    {"Intrusive", "Acid intrusive", "granodiorite"},
    {"Intrusive", "Acid intrusive", "monzogranite"},
    {"Intrusive", "Acid intrusive", "alkali feldspar granite"},
    {"Intrusive", "Alkaline intrusive", "foid diorite"},
    {"Intrusive", "Alkaline intrusive", "foid gabbro"},
    {"Intrusive", "Alkaline intrusive", "nepheline syenite"},
    {"Intrusive", "Alkaline intrusive", "syenite"},
    {"Intrusive", "Intermediate intrusive", "diorite"},
    {"Intrusive", "Intermediate intrusive", "monzonite"},
    {"Intrusive", "Intermediate intrusive", "quartz diorite"},
    {"Intrusive", "Basic intrusive", "gabbro"},
    {"Intrusive", "Basic intrusive", "norite"},
    {"Intrusive", "Basic intrusive", "diabase"},
    {"Intrusive", "Ultrabasic intrusive", "peridotite"},
    {"Intrusive", "Ultrabasic intrusive", "dunite"},
    {"Intrusive", "Ultrabasic intrusive", "pyroxenite"},
    {"Intrusive", "Ultrabasic intrusive", "serpentinite"},
    {"Intrusive", "Dyke", "pegmatite"},
    {"Intrusive", "Dyke", "aplite"},
    {"Intrusive", "Dyke", "lamprophyre"},
    {"Metamorphic", "Slate", "siliceous slate"},
    {"Metamorphic", "Slate", "charcoal slate"},
    {"Metamorphic", "Slate", "sandy slate"},
    {"Metamorphic", "Slate", "slate"},
    {"Metamorphic", "Slate", "calcareous slate"},
    {"Metamorphic", "Phyllite", "phyllite"},
    {"Metamorphic", "Phyllite", "sericite phyllite"},
    {"Metamorphic", "Phyllite", "quartz-sericite phyllite"},
    {"Metamorphic", "Schist", "graphitic schist"},
    {"Metamorphic", "Schist", "actinolite schist"},
    {"Metamorphic", "Schist", "amphibole schist"},
    {"Metamorphic", "Schist", "mica schist"},
    {"Metamorphic", "Schist", "chlorite schist"},
    {"Metamorphic", "Schist", "garnet mica schist"},
    {"Metamorphic", "Schist", "schist"},
    {"Metamorphic", "Gneiss", "gneiss"},
    {"Metamorphic", "Gneiss", "biotite gneiss"},
    {"Metamorphic", "Gneiss", "granitic gneiss"},
    {"Metamorphic", "Gneiss", "migmatite"},
    {"Metamorphic", "Granofels", "quartzite"},
    {"Metamorphic", "Granofels", "marble"},
    {"Metamorphic", "Granofels", "hornfels"},
    {"Metamorphic", "Granofels", "skarn"},
    {"Metamorphic", "Granofels", "amphibolite"},
    {"Metamorphic", "Granofels", "granulite"},
    {"Metamorphic", "Granofels", "eclogite"},
    {"Metamorphic", "Dynamic metamorphic", "mylonite"},
    {"Metamorphic", "Dynamic metamorphic", "cataclasite"},
};

inline constexpr RawRow kChineseRows[] = {
    {"沉积岩", "碎屑岩", "砾岩"},
    {"沉积岩", "碎屑岩", "冰碛岩"},
    {"沉积岩", "碎屑岩", "角砾岩"},
    {"沉积岩", "碎屑岩", "砂岩"},
    {"沉积岩", "碎屑岩", "石英砂岩"},
    {"沉积岩", "碎屑岩", "粉砂岩"},
    {"沉积岩", "碎屑岩", "泥岩"},
    {"沉积岩", "碎屑岩", "页岩"},
    {"沉积岩", "碳酸盐岩", "灰岩"},
    {"沉积岩", "碳酸盐岩", "泥灰岩"},
    {"沉积岩", "碳酸盐岩", "白云岩"},
    {"沉积岩", "化学岩", "硅质岩"},
    {"沉积岩", "化学岩", "石膏岩"},
    {"火山岩", "酸性火山岩", "粗面英安岩"},
    {"火山岩", "酸性火山岩", "角斑岩"},
    {"火山岩", "酸性火山岩", "石英角斑岩"},
    {"火山岩", "酸性火山岩", "流纹岩"},
    {"火山岩", "碱性火山岩", "方沸石岩"},
    {"火山岩", "碱性火山岩", "白榴岩"},
    {"火山岩", "中性火山岩", "安山岩"},
    {"火山岩", "基性火山岩", "玄武岩"},
    {"火山岩", "火山碎屑岩", "凝灰岩"},
    {"侵入岩", "酸性侵入岩", "英云闪长岩"},
    {"侵入岩", "酸性侵入岩", "斜长花岗岩"},
    {"侵入岩", "酸性侵入岩", "花岗岩"},
    {"侵入岩", "酸性侵入岩", "花岗闪长岩"},
    {"侵入岩", "碱性侵入岩", "似长闪长岩"},
    {"侵入岩", "碱性侵入岩", "似长辉长岩"},
    {"侵入岩", "碱性侵入岩", "正长岩"},
    {"侵入岩", "中性侵入岩", "闪长岩"},
    {"侵入岩", "基性侵入岩", "辉长岩"},
    {"侵入岩", "超基性侵入岩", "橄榄岩"},
    {"变质岩", "板岩", "硅质板岩"},
    {"变质岩", "板岩", "炭质板岩"},
    {"变质岩", "板岩", "砂质板岩"},
    {"变质岩", "片岩", "石墨片岩"},
    {"变质岩", "片岩", "阳起石片岩"},
    {"变质岩", "片岩", "角闪片岩"},
    {"变质岩", "片麻岩", "片麻岩"},
    {"变质岩", "片麻岩", "混合岩"},
    {"变质岩", "粒状岩", "石英岩"},
    {"变质岩", "粒状岩", "大理岩"},
};

template <std::size_t N>
std::vector<LithologyRow> rows_of(const RawRow (&raw)[N]) {
  std::vector<LithologyRow> out;
  out.reserve(N);
  for (const auto& r : raw) out.push_back({std::string(r.cls), std::string(r.subclass), std::string(r.lithology)});
  return out;
}
}  // namespace detail

/// Built-in table. The Chinese variant names its classes 沉积岩 / 火山岩 / 侵入岩 / 变质岩,
/// in the same order as kLithologyClasses.
inline const LithologyTable& default_lithology_table(Language language = Language::English) {
  static const LithologyTable en(Language::English, detail::rows_of(detail::kEnglishRows));
  static const LithologyTable zh(Language::Chinese, detail::rows_of(detail::kChineseRows));
  return language == Language::Chinese ? zh : en;
}

/// Position of a level-1 class in table order, accepting either language.
inline std::optional<std::size_t> lithology_class_index(std::string_view cls) {
  static constexpr std::array<std::string_view, 4> kChinese = {"沉积岩", "火山岩", "侵入岩", "变质岩"};
  for (std::size_t i = 0; i < kLithologyClasses.size(); ++i)
    if (kLithologyClasses[i] == cls || kChinese[i] == cls) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Chronostratigraphy

struct AgeUnit {
  std::string eon, era, period, epoch;
  /// Start and end in Ma (millions of years ago).
  double start_ma = 0, end_ma = 0;
};

inline void to_json(json& j, const AgeUnit& a) {
  j = json{{"eon", a.eon}, {"era", a.era}, {"period", a.period}, {"epoch", a.epoch},
           {"start_ma", a.start_ma}, {"end_ma", a.end_ma}};
}
inline void from_json(const json& j, AgeUnit& a) {
  a.eon = j.at("eon").get<std::string>();
  a.era = j.at("era").get<std::string>();
  a.period = j.at("period").get<std::string>();
  a.epoch = j.value("epoch", "");
  a.start_ma = j.at("start_ma").get<double>();
  a.end_ma = j.at("end_ma").get<double>();
}

/// Reference chronology (ICS chart, rounded boundaries).
inline const std::vector<AgeUnit>& default_age_table() {
  static const std::vector<AgeUnit> table = {
      {"Phanerozoic", "Cenozoic", "Quaternary", "Holocene", 0.0117, 0},
      {"Phanerozoic", "Cenozoic", "Quaternary", "Pleistocene", 2.58, 0.0117},
      {"Phanerozoic", "Cenozoic", "Neogene", "Pliocene", 5.333, 2.58},
      {"Phanerozoic", "Cenozoic", "Neogene", "Miocene", 23.03, 5.333},
      {"Phanerozoic", "Cenozoic", "Paleogene", "Oligocene", 33.9, 23.03},
      {"Phanerozoic", "Cenozoic", "Paleogene", "Eocene", 56.0, 33.9},
      {"Phanerozoic", "Cenozoic", "Paleogene", "Paleocene", 66.0, 56.0},
      {"Phanerozoic", "Mesozoic", "Cretaceous", "Late Cretaceous", 100.5, 66.0},
      {"Phanerozoic", "Mesozoic", "Cretaceous", "Early Cretaceous", 145.0, 100.5},
      {"Phanerozoic", "Mesozoic", "Jurassic", "Late Jurassic", 161.5, 145.0},
      {"Phanerozoic", "Mesozoic", "Jurassic", "Middle Jurassic", 174.7, 161.5},
      {"Phanerozoic", "Mesozoic", "Jurassic", "Early Jurassic", 201.4, 174.7},
      {"Phanerozoic", "Mesozoic", "Triassic", "Late Triassic", 237.0, 201.4},
      {"Phanerozoic", "Mesozoic", "Triassic", "Middle Triassic", 247.2, 237.0},
      {"Phanerozoic", "Mesozoic", "Triassic", "Early Triassic", 251.9, 247.2},
      {"Phanerozoic", "Paleozoic", "Permian", "Lopingian", 259.5, 251.9},
      {"Phanerozoic", "Paleozoic", "Permian", "Guadalupian", 274.4, 259.5},
      {"Phanerozoic", "Paleozoic", "Permian", "Cisuralian", 298.9, 274.4},
      {"Phanerozoic", "Paleozoic", "Carboniferous", "Pennsylvanian", 323.2, 298.9},
      {"Phanerozoic", "Paleozoic", "Carboniferous", "Mississippian", 358.9, 323.2},
      {"Phanerozoic", "Paleozoic", "Devonian", "Late Devonian", 382.7, 358.9},
      {"Phanerozoic", "Paleozoic", "Devonian", "Middle Devonian", 393.3, 382.7},
      {"Phanerozoic", "Paleozoic", "Devonian", "Early Devonian", 419.2, 393.3},
      {"Phanerozoic", "Paleozoic", "Silurian", "", 443.8, 419.2},
      {"Phanerozoic", "Paleozoic", "Ordovician", "", 485.4, 443.8},
      {"Phanerozoic", "Paleozoic", "Cambrian", "", 538.8, 485.4},
      {"Proterozoic", "Neoproterozoic", "Ediacaran", "", 635.0, 538.8},
      {"Proterozoic", "Neoproterozoic", "Cryogenian", "", 720.0, 635.0},
      {"Proterozoic", "Neoproterozoic", "Tonian", "", 1000.0, 720.0},
      {"Proterozoic", "Mesoproterozoic", "", "", 1600.0, 1000.0},
      {"Proterozoic", "Paleoproterozoic", "", "", 2500.0, 1600.0},
      {"Archean", "", "", "", 4031.0, 2500.0},
      {"Hadean", "", "", "", 4567.0, 4031.0},
  };
  return table;
}

}  // namespace geomap
