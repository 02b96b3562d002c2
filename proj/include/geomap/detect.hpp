#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "geomap/error.hpp"
#include "geomap/image.hpp"
#include "geomap/model.hpp"
#include "geomap/scoring.hpp"

namespace geomap {

inline constexpr double kNmsIouThreshold = 0.8;

inline constexpr std::string_view kTextUnit = "text_unit";
inline constexpr std::string_view kColorUnit = "color_unit";

struct Detection {
  /// A ComponentKind name, or "text_unit" / "color_unit" for legend units.
  std::string cls;
  BBox bbox;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

inline void to_json(json& j, const Detection& d) {
  j = json{{"class", d.cls}, {"bbox", d.bbox}, {"score", d.score}};
}
inline void from_json(const json& j, Detection& d) {
  d.cls = j.at("class").get<std::string>();
  d.bbox = j.at("bbox").get<BBox>();
  d.score = j.at("score").get<double>();
  if (!(d.score >= 0.0 && d.score <= 1.0))
    throw ParseError(fmt::format("detection score {} outside [0,1]", d.score));
}

/// Canonical detection order: score descending, then bbox, then class.
inline bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.bbox != b.bbox) return a.bbox < b.bbox;
  return a.cls < b.cls;
}

/// Greedy per-class non-maximum suppression. A detection is dropped when a
/// kept detection of the same class overlaps it with IoU >= threshold.
/// Output is in canonical order and independent of input order.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold = kNmsIouThreshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw DefinitionError(fmt::format("nms threshold {} outside (0,1]", iou_threshold));
  std::sort(dets.begin(), dets.end(), detection_before);
  std::map<std::string, std::vector<const Detection*>> kept_by_class;
  std::vector<Detection> out;
  for (const auto& d : dets) {
    auto& kept = kept_by_class[d.cls];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection* k) {
      return iou_det(k->bbox, d.bbox) >= iou_threshold;
    });
    if (suppressed) continue;
    kept.push_back(&d);
    out.push_back(d);
  }
  return out;
}

enum class DetectStage { components, legend_units };

inline std::string_view to_string(DetectStage s) {
  return s == DetectStage::components ? "components" : "legend_units";
}

struct DetectRequest {
  std::string map_id;
  /// The image being analysed: the whole (possibly rescaled) map for the
  /// component stage, the legend crop for the legend stage.
  const Image* image = nullptr;
  /// Where `image` sits inside the whole rescaled map.
  BBox region;
  DetectStage stage = DetectStage::components;
  /// Resolution factor applied to the map before detection.
  double scale = 1.0;
};

/// Source of component and legend-unit detections. Returned boxes are in the
/// frame of `req.image`.
class DetectorProvider {
 public:
  virtual ~DetectorProvider() = default;
  virtual std::vector<Detection> raw_detect(const DetectRequest& req) = 0;
};

/// Detections with NMS at the standard threshold applied.
inline std::vector<Detection> detect(DetectorProvider& provider, const DetectRequest& req) {
  return nms(provider.raw_detect(req), kNmsIouThreshold);
}

/// Per-map annotation files: `<dir>/<map_id>.json` holding
///   {"map_id": ..., "components": [Detection...], "legend_units": [Detection...]}
/// with every bbox in whole-map pixel coordinates at original resolution.
class AnnotationProvider final : public DetectorProvider {
 public:
  explicit AnnotationProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

  struct Annotation {
    std::vector<Detection> components;
    std::vector<Detection> legend_units;
  };

  Annotation load(const std::string& map_id) const {
    if (!std::filesystem::is_directory(dir_))
      throw ProviderError(fmt::format("annotation directory '{}' not found", dir_.string()));
    const auto path = dir_ / (map_id + ".json");
    if (!std::filesystem::exists(path))
      throw LookupError(fmt::format("no annotation for map id '{}' in '{}'", map_id, dir_.string()));
    const json j = parse_json(read_file(path), path.string());
    return {j.value("components", std::vector<Detection>{}),
            j.value("legend_units", std::vector<Detection>{})};
  }

  std::vector<Detection> raw_detect(const DetectRequest& req) override {
    const auto ann = load(req.map_id);
    const auto& source = req.stage == DetectStage::components ? ann.components : ann.legend_units;
    std::vector<Detection> out;
    for (auto d : source) {
      d.bbox = d.bbox.scaled(req.scale);
      if (req.stage == DetectStage::legend_units) {
        // Rounding after rescaling can push a unit a pixel past the legend edge.
        const auto inside = intersection(d.bbox, req.region);
        if (!inside || 2 * inside->area() < d.bbox.area()) continue;
        d.bbox = inside->translated(-req.region.x_min, -req.region.y_min);
      }
      out.push_back(std::move(d));
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace geomap
