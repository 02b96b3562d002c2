#pragma once

// File-backed snapshots of the external geo services and their queries.
//
// Directory layout:
//   quakes.csv                 lon,lat,mag,year,depth   (depth may be empty)
//   faults.json                {"faults": [{"name", "slip_type", "polyline": [[lon, lat], ...]}]}
//   population.bin / .json     raster, see RasterHeader
//   landcover.bin / .json

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/error.hpp"
#include "geomap/geometry.hpp"
#include "geomap/image.hpp"
#include "geomap/model.hpp"
#include "geomap/text.hpp"

namespace geomap {

inline constexpr double kMinQuakeMagnitude = 2.5;  // exclusive
inline constexpr int kMinQuakeYear = 1970;        // inclusive

struct QuakeRecord {
  double lon = 0, lat = 0;
  double magnitude = 0;
  int year = 0;
  std::optional<double> depth_km;

  friend bool operator==(const QuakeRecord&, const QuakeRecord&) = default;
};

inline void to_json(json& j, const QuakeRecord& q) {
  j = json{{"lon", q.lon}, {"lat", q.lat}, {"mag", q.magnitude}, {"year", q.year},
           {"depth_km", q.depth_km ? json(*q.depth_km) : json(nullptr)}};
}

struct LonLat {
  double lon = 0, lat = 0;
  friend bool operator==(const LonLat&, const LonLat&) = default;
};

struct FaultRecord {
  std::string name;
  std::vector<LonLat> polyline;
  std::optional<std::string> slip_type;

  friend bool operator==(const FaultRecord&, const FaultRecord&) = default;
};

inline void to_json(json& j, const FaultRecord& f) {
  json line = json::array();
  for (const auto& p : f.polyline) line.push_back({p.lon, p.lat});
  j = json{{"name", f.name}, {"polyline", line},
           {"slip_type", f.slip_type ? json(*f.slip_type) : json(nullptr)}};
}
inline void from_json(const json& j, FaultRecord& f) {
  f.name = j.value("name", "");
  f.polyline.clear();
  for (const auto& p : j.at("polyline")) f.polyline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  if (f.polyline.size() < 2) throw ParseError(fmt::format("fault '{}' has fewer than 2 vertices", f.name));
  if (j.contains("slip_type") && !j["slip_type"].is_null()) f.slip_type = j["slip_type"].get<std::string>();
  else f.slip_type.reset();
}

inline std::vector<QuakeRecord> parse_quake_csv(std::string_view text, std::string_view origin = "quakes.csv") {
  std::vector<QuakeRecord> out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.starts_with("lon")) continue;
    const auto f = split(line, ',');
    if (f.size() < 4) throw ParseError(fmt::format("{}:{}: expected lon,lat,mag,year[,depth]", origin, line_no));
    try {
      QuakeRecord q;
      q.lon = std::stod(f[0]);
      q.lat = std::stod(f[1]);
      q.magnitude = std::stod(f[2]);
      q.year = std::stoi(f[3]);
      if (f.size() > 4 && !trim(f[4]).empty()) q.depth_km = std::stod(f[4]);
      if (!(q.magnitude > 0)) throw ParseError("magnitude must be positive");
      out.push_back(q);
    } catch (const std::exception& e) {
      throw ParseError(fmt::format("{}:{}: {}", origin, line_no, e.what()));
    }
  }
  return out;
}

inline std::string format_quake_csv(const std::vector<QuakeRecord>& quakes) {
  std::string out = "lon,lat,mag,year,depth\n";
  for (const auto& q : quakes)
    out += fmt::format("{},{},{},{},{}\n", format_number(q.lon), format_number(q.lat),
                       format_number(q.magnitude), q.year, q.depth_km ? format_number(*q.depth_km) : "");
  return out;
}

/// Records inside `range` (closed) with magnitude > 2.5 and year >= 1970,
/// largest magnitude first (ties: later year, then lon, then lat).
inline std::vector<QuakeRecord> query_quakes(const std::vector<QuakeRecord>& db, const LonLatRange& range) {
  std::vector<QuakeRecord> out;
  for (const auto& q : db)
    if (q.magnitude > kMinQuakeMagnitude && q.year >= kMinQuakeYear && range.contains(q.lon, q.lat))
      out.push_back(q);
  std::stable_sort(out.begin(), out.end(), [](const QuakeRecord& a, const QuakeRecord& b) {
    if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
    if (a.year != b.year) return a.year > b.year;
    if (a.lon != b.lon) return a.lon < b.lon;
    return a.lat < b.lat;
  });
  return out;
}

/// Liang-Barsky test of segment p-q against the closed rectangle.
inline bool segment_intersects(const LonLat& p, const LonLat& q, const LonLatRange& r) {
  double t0 = 0.0, t1 = 1.0;
  const double dx = q.lon - p.lon, dy = q.lat - p.lat;
  const double edges[4][2] = {{-dx, p.lon - r.west}, {dx, r.east - p.lon},
                              {-dy, p.lat - r.south}, {dy, r.north - p.lat}};
  for (const auto& [pk, qk] : edges) {
    if (pk == 0.0) {
      if (qk < 0.0) return false;
      continue;
    }
    const double t = qk / pk;
    if (pk < 0.0) t0 = std::max(t0, t);
    else t1 = std::min(t1, t);
    if (t0 > t1) return false;
  }
  return true;
}

inline std::vector<FaultRecord> query_faults(const std::vector<FaultRecord>& db, const LonLatRange& range) {
  std::vector<FaultRecord> out;
  for (const auto& f : db) {
    for (std::size_t i = 0; i + 1 < f.polyline.size(); ++i) {
      if (segment_intersects(f.polyline[i], f.polyline[i + 1], range)) {
        out.push_back(f);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rasters

/// Sidecar of a flat row-major grid; row 0 is the northernmost row.
struct RasterHeader {
  double west = 0, north = 0;
  double cell_size = 0;  // degrees
  int width = 0, height = 0;
  std::string dtype = "float32";  // float32 | float64 | int32 | uint8
};

inline void to_json(json& j, const RasterHeader& h) {
  j = json{{"west", h.west}, {"north", h.north}, {"cell_size", h.cell_size},
           {"width", h.width}, {"height", h.height}, {"dtype", h.dtype}};
}
inline void from_json(const json& j, RasterHeader& h) {
  h.west = j.at("west").get<double>();
  h.north = j.at("north").get<double>();
  h.cell_size = j.at("cell_size").get<double>();
  h.width = j.at("width").get<int>();
  h.height = j.at("height").get<int>();
  h.dtype = j.value("dtype", "float32");
}

struct Raster {
  RasterHeader header;
  std::vector<double> values;

  double at(int col, int row) const { return values[static_cast<std::size_t>(row) * header.width + col]; }
  LonLatRange extent() const {
    return {header.west, header.west + header.cell_size * header.width,
            header.north - header.cell_size * header.height, header.north};
  }
};

inline std::size_t dtype_size(std::string_view dtype) {
  if (dtype == "float32" || dtype == "int32") return 4;
  if (dtype == "float64") return 8;
  if (dtype == "uint8") return 1;
  throw ParseError(fmt::format("unsupported raster dtype '{}'", dtype));
}

/// Little-endian host assumed, as for every snapshot produced by this tool.
inline Raster decode_raster(const RasterHeader& h, std::string_view bytes) {
  if (h.width <= 0 || h.height <= 0 || !(h.cell_size > 0))
    throw ParseError("raster header needs positive width, height and cell_size");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  const std::size_t size = dtype_size(h.dtype);
  if (bytes.size() != n * size)
    throw ParseError(fmt::format("raster holds {} bytes, header implies {}", bytes.size(), n * size));
  Raster r{h, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + i * size;
    if (h.dtype == "float32") {
      float v;
      std::memcpy(&v, p, 4);
      r.values[i] = v;
    } else if (h.dtype == "float64") {
      std::memcpy(&r.values[i], p, 8);
    } else if (h.dtype == "int32") {
      std::int32_t v;
      std::memcpy(&v, p, 4);
      r.values[i] = v;
    } else {
      r.values[i] = static_cast<unsigned char>(*p);
    }
  }
  return r;
}

inline std::string encode_raster(const Raster& r) {
  const std::size_t size = dtype_size(r.header.dtype);
  std::string out(r.values.size() * size, '\0');
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    char* p = out.data() + i * size;
    const double v = r.values[i];
    if (r.header.dtype == "float32") {
      const float f = static_cast<float>(v);
      std::memcpy(p, &f, 4);
    } else if (r.header.dtype == "float64") {
      std::memcpy(p, &v, 8);
    } else if (r.header.dtype == "int32") {
      const auto x = static_cast<std::int32_t>(v);
      std::memcpy(p, &x, 4);
    } else {
      *p = static_cast<char>(static_cast<unsigned char>(v));
    }
  }
  return out;
}

enum class RasterMode { sum, histogram };

/// Statistics over cells whose centres fall inside `range` (closed).
/// Sum: {"sum", "cells"}; histogram: {"histogram": {class: count}, "cells"}.
/// An empty object when the range misses the raster.
inline json raster_stats(const Raster& r, const LonLatRange& range, RasterMode mode,
                         std::vector<std::string>* warnings = nullptr) {
  const auto& h = r.header;
  double sum = 0.0;
  std::map<long long, long long> hist;
  long long cells = 0;
  if (intersection_area(r.extent(), range) > 0.0) {
    for (int row = 0; row < h.height; ++row) {
      const double lat = h.north - (row + 0.5) * h.cell_size;
      if (lat < range.south || lat > range.north) continue;
      for (int col = 0; col < h.width; ++col) {
        const double lon = h.west + (col + 0.5) * h.cell_size;
        if (lon < range.west || lon > range.east) continue;
        ++cells;
        if (mode == RasterMode::sum) sum += r.at(col, row);
        else ++hist[std::llround(r.at(col, row))];
      }
    }
  }
  if (cells == 0) {
    if (warnings) warnings->push_back("raster query range does not cover any cell");
    return json::object();
  }
  if (mode == RasterMode::sum) return json{{"sum", sum}, {"cells", cells}};
  json histogram = json::object();
  for (const auto& [k, v] : hist) histogram[std::to_string(k)] = v;
  return json{{"histogram", histogram}, {"cells", cells}};
}

// ---------------------------------------------------------------------------
// Snapshot directory

class Snapshots {
 public:
  explicit Snapshots(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  const std::vector<QuakeRecord>& quakes() const {
    std::call_once(quakes_once_, [&] { quakes_ = parse_quake_csv(read("quakes.csv"), "quakes.csv"); });
    return quakes_;
  }

  const std::vector<FaultRecord>& faults() const {
    std::call_once(faults_once_, [&] {
      const json j = parse_json(read("faults.json"), "faults.json");
      faults_ = (j.is_array() ? j : j.at("faults")).get<std::vector<FaultRecord>>();
    });
    return faults_;
  }

  const Raster& raster(const std::string& name) const {
    std::lock_guard lock(raster_mu_);
    auto it = rasters_.find(name);
    if (it != rasters_.end()) return it->second;
    const auto header = parse_json(read(name + ".json"), name + ".json").get<RasterHeader>();
    return rasters_.emplace(name, decode_raster(header, read(name + ".bin"))).first->second;
  }

 private:
  std::string read(const std::string& file) const {
    const auto path = dir_ / file;
    if (!std::filesystem::exists(path))
      throw ToolError(fmt::format("snapshot file '{}' not found", path.string()));
    return read_file(path);
  }

  std::filesystem::path dir_;
  mutable std::once_flag quakes_once_, faults_once_;
  mutable std::vector<QuakeRecord> quakes_;
  mutable std::vector<FaultRecord> faults_;
  mutable std::mutex raster_mu_;
  mutable std::map<std::string, Raster> rasters_;
};

}  // namespace geomap
