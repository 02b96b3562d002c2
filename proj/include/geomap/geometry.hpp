#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>

#include <fmt/format.h>

namespace geomap {

/// Axis-aligned pixel box, origin top-left, x rightward, y downward.
/// Half-open: covers columns [x_min, x_max) and rows [y_min, y_max).
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  std::int64_t area() const {
    return valid() ? std::int64_t{width()} * height() : 0;
  }
  bool valid() const {
    return x_min < x_max && y_min < y_max && x_min >= 0 && y_min >= 0;
  }
  bool contains(const BBox& inner) const {
    return inner.x_min >= x_min && inner.y_min >= y_min &&
           inner.x_max <= x_max && inner.y_max <= y_max;
  }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  BBox translated(int dx, int dy) const {
    return {x_min + dx, y_min + dy, x_max + dx, y_max + dy};
  }

  /// Scale every coordinate by `factor`, rounding to the nearest pixel.
  BBox scaled(double factor) const {
    auto r = [factor](int v) {
      return static_cast<int>(v * factor + 0.5);
    };
    return {r(x_min), r(y_min), r(x_max), r(y_max)};
  }

  std::string to_string() const {
    return fmt::format("({}, {}, {}, {})", x_min, y_min, x_max, y_max);
  }

  friend bool operator==(const BBox&, const BBox&) = default;
  friend auto operator<=>(const BBox&, const BBox&) = default;
};

inline std::int64_t intersection_area(const BBox& a, const BBox& b) {
  const std::int64_t w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const std::int64_t h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0 && h > 0) ? w * h : 0;
}

inline std::optional<BBox> intersection(const BBox& a, const BBox& b) {
  BBox r{std::max(a.x_min, b.x_min), std::max(a.y_min, b.y_min),
         std::min(a.x_max, b.x_max), std::min(a.y_max, b.y_max)};
  if (r.x_min >= r.x_max || r.y_min >= r.y_max) return std::nullopt;
  return r;
}

/// Rectangle in degree space. No antimeridian crossing.
struct LonLatRange {
  double west = 0;
  double east = 0;
  double south = 0;
  double north = 0;

  bool valid() const {
    return west < east && south < north && west >= -180 && east <= 180 &&
           south >= -90 && north <= 90;
  }
  double area() const { return valid() ? (east - west) * (north - south) : 0.0; }

  /// Closed containment.
  bool contains(double lon, double lat) const {
    return lon >= west && lon <= east && lat >= south && lat <= north;
  }
  /// Strict interior, used where edge points must count as ambiguous.
  bool contains_strictly(double lon, double lat) const {
    return lon > west && lon < east && lat > south && lat < north;
  }

  friend bool operator==(const LonLatRange&, const LonLatRange&) = default;
};

inline double intersection_area(const LonLatRange& a, const LonLatRange& b) {
  const double w = std::min(a.east, b.east) - std::max(a.west, b.west);
  const double h = std::min(a.north, b.north) - std::max(a.south, b.south);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

}  // namespace geomap
