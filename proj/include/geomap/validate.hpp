#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "geomap/model.hpp"

namespace geomap {

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Every broken invariant of `meta` as a human-readable line. Empty means the
/// metadata is safe to hand to any downstream stage. Without a size, boxes are
/// only checked for shape.
inline std::vector<std::string> validate_metadata(const MapMetadata& meta,
                                                  std::optional<ImageSize> size = std::nullopt) {
  std::vector<std::string> out;
  const BBox image = size ? BBox{0, 0, size->width, size->height} : BBox{};

  auto check_box = [&](const BBox& b, const std::string& what) {
    if (!b.valid()) {
      out.push_back(fmt::format("{}: degenerate or negative bbox {}", what, b.to_string()));
    } else if (size && !image.contains(b)) {
      out.push_back(fmt::format("{}: bbox {} outside image {}x{}", what, b.to_string(),
                                size->width, size->height));
    }
  };

  std::map<ComponentKind, int> counts;
  const Component* legend = nullptr;
  for (std::size_t i = 0; i < meta.components.size(); ++i) {
    const auto& c = meta.components[i];
    const auto what = fmt::format("components[{}] ({})", i, to_string(c.kind));
    check_box(c.bbox, what);
    if (!(c.confidence >= 0.0 && c.confidence <= 1.0))
      out.push_back(fmt::format("{}: confidence {} outside [0,1]", what, c.confidence));
    if (c.kind != ComponentKind::other && ++counts[c.kind] == 2)
      out.push_back(fmt::format("components: more than one {}", to_string(c.kind)));
    if (c.kind == ComponentKind::legend && !legend) legend = &c;
  }

  for (std::size_t i = 0; i < meta.legend_units.size(); ++i) {
    const auto& u = meta.legend_units[i];
    const auto what = fmt::format("legend_units[{}]", i);
    check_box(u.text_bbox, what + ".text_bbox");
    check_box(u.color_bbox, what + ".color_bbox");
    if (!legend) {
      out.push_back(fmt::format("{}: no legend component to contain it", what));
    } else {
      if (!legend->bbox.contains(u.text_bbox))
        out.push_back(fmt::format("{}.text_bbox outside legend bbox", what));
      if (!legend->bbox.contains(u.color_bbox))
        out.push_back(fmt::format("{}.color_bbox outside legend bbox", what));
    }
  }

  if (meta.lonlat && !meta.lonlat->valid()) {
    const auto& r = *meta.lonlat;
    out.push_back(fmt::format("lonlat: invalid range west={} east={} south={} north={}",
                              r.west, r.east, r.south, r.north));
  }

  double total = 0.0;
  for (const auto& [rock, frac] : meta.rock_areas) {
    if (!(frac >= 0.0 && frac <= 1.0))
      out.push_back(fmt::format("rock_areas[{}]: fraction {} outside [0,1]", rock, frac));
    total += frac;
  }
  if (total > 1.0 + 1e-6)
    out.push_back(fmt::format("rock_areas: fractions sum to {} > 1", total));

  return out;
}

}  // namespace geomap
