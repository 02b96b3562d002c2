#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "geomap/error.hpp"
#include "geomap/image.hpp"
#include "geomap/model.hpp"
#include "geomap/prompts.hpp"

namespace geomap {

/// An image attached to a request. Pixels are held in memory and encoded only
/// when a request leaves the process.
struct ImageAttachment {
  std::shared_ptr<const Image> image;
  /// What the image shows ("full", "legend", "main_map", ...).
  std::string label;
  /// Factor applied to fit payload limits (1.0 = original pixels).
  double downscale = 1.0;

  friend bool operator==(const ImageAttachment& a, const ImageAttachment& b) {
    const bool same_pixels =
        a.image == b.image || (a.image && b.image && *a.image == *b.image);
    return same_pixels && a.label == b.label && a.downscale == b.downscale;
  }
};

struct CompletionRequest {
  std::string system{prompts::kSystem};
  std::string instruction;
  std::vector<ImageAttachment> images;
  double temperature = 0.0;
  int seed = 42;
  int max_tokens = 2048;
  bool json_mode = true;
  /// Routing metadata for in-process backends (purpose, ids). Never sent on
  /// the wire.
  json hints = json::object();

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

inline void validate_request(const CompletionRequest& req) {
  if (req.max_tokens <= 0) throw DefinitionError("max_tokens must be positive");
  if (req.temperature < 0) throw DefinitionError("temperature must be non-negative");
}

inline json serialize_request(const CompletionRequest& req) {
  json images = json::array();
  for (const auto& a : req.images) {
    images.push_back({{"label", a.label},
                      {"downscale", a.downscale},
                      {"png_base64", a.image ? base64_encode(encode_png(*a.image)) : ""}});
  }
  return {{"system", req.system},       {"instruction", req.instruction},
          {"images", images},           {"temperature", req.temperature},
          {"seed", req.seed},           {"max_tokens", req.max_tokens},
          {"json_mode", req.json_mode}, {"hints", req.hints}};
}

inline CompletionRequest deserialize_request(const json& j) {
  CompletionRequest req;
  req.system = j.at("system").get<std::string>();
  req.instruction = j.at("instruction").get<std::string>();
  for (const auto& a : j.at("images")) {
    ImageAttachment att;
    att.label = a.at("label").get<std::string>();
    att.downscale = a.at("downscale").get<double>();
    const auto b64 = a.at("png_base64").get<std::string>();
    if (!b64.empty()) att.image = std::make_shared<const Image>(decode_png(base64_decode(b64)));
    req.images.push_back(std::move(att));
  }
  req.temperature = j.at("temperature").get<double>();
  req.seed = j.at("seed").get<int>();
  req.max_tokens = j.at("max_tokens").get<int>();
  req.json_mode = j.at("json_mode").get<bool>();
  req.hints = j.value("hints", json::object());
  return req;
}

/// One finished backend call, as seen by the telemetry sink.
struct CallRecord {
  std::string purpose;
  int attempts = 1;
  bool ok = true;
  std::string error;
};

/// Append-only, thread-safe.
class Telemetry {
 public:
  void record(CallRecord r) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(r));
  }
  std::vector<CallRecord> snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<CallRecord> records_;
};

enum class BackendKind { remote_endpoint, oracle_mock, scripted_mock, null_mock };

inline std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::remote_endpoint: return "remote";
    case BackendKind::oracle_mock: return "oracle";
    case BackendKind::scripted_mock: return "scripted";
    case BackendKind::null_mock: return "null";
  }
  return "null";
}

/// Multimodal chat-completion client.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Model text for `req`. Throws BackendError when no reply can be produced.
  virtual std::string complete(const CompletionRequest& req) = 0;
  virtual BackendKind kind() const = 0;
  virtual bool supports_json_mode() const { return true; }

  Telemetry& telemetry() { return telemetry_; }

 protected:
  Telemetry telemetry_;
};

/// Caps the number of in-flight requests to the wrapped backend.
class ThrottledBackend final : public Backend {
 public:
  ThrottledBackend(std::shared_ptr<Backend> inner, int cap)
      : inner_(std::move(inner)), slots_(std::max(1, cap)) {}

  std::string complete(const CompletionRequest& req) override {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};
    return inner_->complete(req);
  }
  BackendKind kind() const override { return inner_->kind(); }
  bool supports_json_mode() const override { return inner_->supports_json_mode(); }
  Backend& inner() { return *inner_; }

 private:
  std::shared_ptr<Backend> inner_;
  std::counting_semaphore<> slots_;
};

class NullBackend final : public Backend {
 public:
  std::string complete(const CompletionRequest& req) override {
    telemetry_.record({req.hints.value("purpose", ""), 1, false, "null backend"});
    throw BackendError("null backend: no model configured");
  }
  BackendKind kind() const override { return BackendKind::null_mock; }
};

/// Transcript-driven mock. Replies come from, in order: the first rule whose
/// pattern matches the instruction (and whose purpose matches, if given), the
/// front of the queue, the default reply. With none of those it fails.
///
/// Transcript JSON:
///   {"rules":[{"match":"<ECMAScript regex>","purpose":"qa","reply":"..."}],
///    "queue":["..."], "default":"..."}
class ScriptedBackend final : public Backend {
 public:
  struct Rule {
    std::string pattern;
    std::regex re;
    std::optional<std::string> purpose;
    std::string reply;
  };

  ScriptedBackend() = default;

  static std::shared_ptr<ScriptedBackend> from_json(const json& j) {
    auto b = std::make_shared<ScriptedBackend>();
    for (const auto& r : j.value("rules", json::array())) {
      std::optional<std::string> purpose;
      if (r.contains("purpose") && !r["purpose"].is_null()) purpose = r["purpose"].get<std::string>();
      b->add_rule(r.at("match").get<std::string>(), r.at("reply").get<std::string>(), purpose);
    }
    for (const auto& q : j.value("queue", json::array())) b->enqueue(q.get<std::string>());
    if (j.contains("default") && !j["default"].is_null())
      b->set_default(j["default"].get<std::string>());
    return b;
  }

  ScriptedBackend& add_rule(std::string pattern, std::string reply,
                            std::optional<std::string> purpose = std::nullopt) {
    std::lock_guard lock(mu_);
    std::regex re;
    try {
      re = std::regex(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw ParseError(fmt::format("scripted rule '{}': {}", pattern, e.what()));
    }
    rules_.push_back({std::move(pattern), std::move(re), std::move(purpose), std::move(reply)});
    return *this;
  }
  ScriptedBackend& enqueue(std::string reply) {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(reply));
    return *this;
  }
  ScriptedBackend& set_default(std::string reply) {
    std::lock_guard lock(mu_);
    default_ = std::move(reply);
    return *this;
  }

  std::string complete(const CompletionRequest& req) override {
    const std::string purpose = req.hints.value("purpose", "");
    std::lock_guard lock(mu_);
    ++calls_;
    for (const auto& r : rules_) {
      if (r.purpose && *r.purpose != purpose) continue;
      if (std::regex_search(req.instruction, r.re)) {
        telemetry_.record({purpose, 1, true, {}});
        return r.reply;
      }
    }
    if (!queue_.empty()) {
      std::string reply = std::move(queue_.front());
      queue_.pop_front();
      telemetry_.record({purpose, 1, true, {}});
      return reply;
    }
    if (default_) {
      telemetry_.record({purpose, 1, true, {}});
      return *default_;
    }
    telemetry_.record({purpose, 1, false, "script exhausted"});
    throw BackendError("scripted backend: transcript exhausted");
  }

  BackendKind kind() const override { return BackendKind::scripted_mock; }
  int calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::deque<std::string> queue_;
  std::optional<std::string> default_;
  int calls_ = 0;
};

/// Ground truth known to the oracle mock.
struct OracleKnowledge {
  std::map<std::string, MapMetadata> maps;
  std::map<std::string, BenchItem> items;
};

/// Knowledge kinds an oracle gate affirms for each task.
inline std::vector<std::string_view> oracle_needed_kinds(Task task) {
  switch (task) {
    case Task::earthquake_risk:
      return {"historical_earthquakes", "active_faults", "population_density"};
    case Task::lithology_composition:
      return {"lithology_table"};
    default:
      return {};
  }
}

/// Reply value an ideal model would give for `v`, in the coordinate frame of
/// an image rescaled by `scale`.
inline json oracle_answer_value(const AnswerValue& v, double scale = 1.0) {
  return std::visit(
      [&](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ChoiceLabel>) return x.label;
        else if constexpr (std::is_same_v<T, TextAnswer>) return x.text;
        else if constexpr (std::is_same_v<T, BBox>) {
          const BBox b = x.scaled(scale);
          return fmt::format("[{}, {}, {}, {}]", b.x_min, b.y_min, b.x_max, b.y_max);
        } else if constexpr (std::is_same_v<T, NameSet>) return x.names;
        else if constexpr (std::is_same_v<T, LonLatRange>) return json(x);
        else return x.text;
      },
      v);
}

/// Answers every request from fixture ground truth, routed by `hints.purpose`:
/// "extract", "ocr", "gate", "qa", "judge".
class OracleBackend final : public Backend {
 public:
  explicit OracleBackend(std::shared_ptr<const OracleKnowledge> truth) : truth_(std::move(truth)) {}

  std::string complete(const CompletionRequest& req) override {
    const std::string purpose = req.hints.value("purpose", "");
    try {
      std::string reply = dispatch(purpose, req);
      telemetry_.record({purpose, 1, true, {}});
      return reply;
    } catch (const Error& e) {
      telemetry_.record({purpose, 1, false, e.what()});
      throw BackendError(fmt::format("oracle backend: {}", e.what()));
    }
  }
  BackendKind kind() const override { return BackendKind::oracle_mock; }

 private:
  const MapMetadata& map(const json& hints) const {
    const auto id = hints.value("map_id", "");
    auto it = truth_->maps.find(id);
    if (it == truth_->maps.end()) throw LookupError(fmt::format("unknown map '{}'", id));
    return it->second;
  }

  std::string dispatch(const std::string& purpose, const CompletionRequest& req) const {
    const auto& h = req.hints;
    if (purpose == "extract") return extract(h);
    if (purpose == "ocr") return ocr(h);
    if (purpose == "gate") return gate(h);
    if (purpose == "qa") return qa(h);
    if (purpose == "judge") return R"({"answer": "C"})";
    throw LookupError(fmt::format("no oracle route for purpose '{}'", purpose));
  }

  std::string extract(const json& h) const {
    const auto& m = map(h);
    const auto kind = component_kind_from(h.value("component", ""));
    if (!kind) throw LookupError("extract: missing component kind");
    json known = json::object();
    if (const auto* c = m.find(*kind)) known = c->info;
    switch (*kind) {
      case ComponentKind::title:
        if (m.sheet_name) known["sheet_name"] = *m.sheet_name;
        break;
      case ComponentKind::scale:
        if (m.scale) known["scale"] = *m.scale;
        break;
      case ComponentKind::main_map:
        if (m.lonlat) {
          known["west"] = m.lonlat->west;
          known["east"] = m.lonlat->east;
          known["south"] = m.lonlat->south;
          known["north"] = m.lonlat->north;
        }
        break;
      case ComponentKind::index_map:
        if (m.neighbors) known["neighbors"] = *m.neighbors;
        break;
      default:
        break;
    }
    json out = json::object();
    for (const auto& f : h.value("fields", json::array())) {
      const auto name = f.get<std::string>();
      out[name] = known.contains(name) ? known[name] : json(nullptr);
    }
    return out.dump();
  }

  std::string ocr(const json& h) const {
    const auto& m = map(h);
    const BBox box = h.at("text_bbox").get<BBox>();
    const LegendUnit* best = nullptr;
    double best_iou = 0.5;
    for (const auto& u : m.legend_units) {
      const auto inter = intersection_area(u.text_bbox, box);
      const auto uni = u.text_bbox.area() + box.area() - inter;
      const double iou = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
      if (iou >= best_iou) {
        best_iou = iou;
        best = &u;
      }
    }
    if (!best) throw LookupError(fmt::format("no legend text at {}", box.to_string()));
    return compose_legend_text(*best);
  }

  std::string gate(const json& h) const {
    const auto task = task_from(h.value("task", ""));
    std::vector<std::string_view> needed;
    if (task) needed = oracle_needed_kinds(*task);
    json out = json::object();
    for (const auto& k : h.value("kinds", json::array())) {
      const auto name = k.get<std::string>();
      const bool yes = std::find(needed.begin(), needed.end(), name) != needed.end();
      out[name] = yes ? "yes" : "no";
    }
    return out.dump();
  }

  std::string qa(const json& h) const {
    const auto id = h.value("item_id", "");
    auto it = truth_->items.find(id);
    if (it == truth_->items.end()) throw LookupError(fmt::format("unknown item '{}'", id));
    const double scale = h.value("scale", 1.0);
    json reply = {{"reason", "Read directly from the annotated map."},
                  {"answer", oracle_answer_value(it->second.ground_truth, scale)}};
    return reply.dump();
  }

  std::shared_ptr<const OracleKnowledge> truth_;
};

}  // namespace geomap
