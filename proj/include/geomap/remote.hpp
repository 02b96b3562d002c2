#pragma once

// HTTP clients for a chat-completions model endpoint and a remote detector.
// Kept apart from backend.hpp so only translation units that talk to the
// network pay for cpp-httplib.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <regex>
#include <string>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "geomap/backend.hpp"
#include "geomap/detect.hpp"

namespace geomap {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix without trailing slash
};

inline Endpoint parse_endpoint(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, kUrl))
    throw DefinitionError(fmt::format("endpoint '{}' is not an http(s) URL", url));
  std::string path = m[2].matched ? m[2].str() : "";
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {m[1].str(), path};
}

inline std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

struct RemoteConfig {
  std::string base_url;
  std::string api_key;
  std::string model = "gpt-4o";
  bool json_mode_supported = true;
  /// Retries after the first attempt for transient failures.
  int max_retries = 3;
  std::chrono::milliseconds backoff{500};
  std::chrono::seconds timeout{120};
  std::size_t max_payload_bytes = 20u << 20;

  /// MODEL_BASE_URL and MODEL_API_KEY; MODEL_NAME optionally overrides the model.
  static RemoteConfig from_env() {
    RemoteConfig c;
    c.base_url = env_or("MODEL_BASE_URL");
    c.api_key = env_or("MODEL_API_KEY");
    c.model = env_or("MODEL_NAME", c.model);
    return c;
  }
};

/// Request body in the prevailing chat-completions shape:
///   {"model", "messages": [{"role":"system","content":...},
///    {"role":"user","content":[{"type":"text","text":...},
///      {"type":"image_url","image_url":{"url":"data:image/png;base64,..."}}]}],
///    "temperature", "seed", "max_tokens", ["response_format":{"type":"json_object"}]}
inline json chat_completion_body(const CompletionRequest& req, const std::string& model,
                                 bool json_mode_supported) {
  std::string instruction = req.instruction;
  if (req.json_mode && !json_mode_supported) {
    instruction += "\n";
    instruction += prompts::kReask;
  }
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", instruction}});
  for (const auto& a : req.images) {
    if (!a.image) continue;
    content.push_back(
        {{"type", "image_url"},
         {"image_url", {{"url", "data:image/png;base64," + base64_encode(encode_png(*a.image))}}}});
  }
  json body = {{"model", model},
               {"messages", json::array({{{"role", "system"}, {"content", req.system}},
                                         {{"role", "user"}, {"content", content}}})},
               {"temperature", req.temperature},
               {"seed", req.seed},
               {"max_tokens", req.max_tokens}};
  if (req.json_mode && json_mode_supported) body["response_format"] = {{"type", "json_object"}};
  return body;
}

inline bool transient_status(int status) {
  return status == 408 || status == 409 || status == 429 || status >= 500;
}

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config)
      : config_(std::move(config)), endpoint_(parse_endpoint(config_.base_url)) {}

  std::string complete(const CompletionRequest& req) override {
    validate_request(req);
    const std::string purpose = req.hints.value("purpose", "");
    const std::string body = chat_completion_body(req, config_.model, config_.json_mode_supported).dump();
    if (body.size() > config_.max_payload_bytes) {
      telemetry_.record({purpose, 0, false, "payload too large"});
      throw PayloadError(fmt::format("request body {} bytes exceeds limit {}", body.size(),
                                     config_.max_payload_bytes));
    }

    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_error;
    auto delay = config_.backoff;
    for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
      auto res = client.Post(endpoint_.path + "/chat/completions", headers, body, "application/json");
      if (!res) {
        last_error = fmt::format("transport error: {}", httplib::to_string(res.error()));
      } else if (res->status == 200) {
        try {
          const json j = json::parse(res->body);
          std::string text = j.at("choices").at(0).at("message").at("content").get<std::string>();
          telemetry_.record({purpose, attempt, true, {}});
          return text;
        } catch (const json::exception& e) {
          telemetry_.record({purpose, attempt, false, e.what()});
          throw BackendError(fmt::format("malformed completion response: {}", e.what()));
        }
      } else if (!transient_status(res->status)) {
        last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200));
        telemetry_.record({purpose, attempt, false, last_error});
        throw BackendError(last_error);
      } else {
        last_error = fmt::format("HTTP {}", res->status);
      }
      if (attempt <= config_.max_retries) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
    telemetry_.record({purpose, config_.max_retries + 1, false, last_error});
    throw BackendError(fmt::format("model endpoint failed after {} attempts: {}",
                                   config_.max_retries + 1, last_error));
  }

  BackendKind kind() const override { return BackendKind::remote_endpoint; }
  bool supports_json_mode() const override { return config_.json_mode_supported; }

 private:
  RemoteConfig config_;
  Endpoint endpoint_;
};

struct RemoteDetectorConfig {
  std::string base_url;
  int max_retries = 2;
  std::chrono::milliseconds backoff{250};
  std::chrono::seconds timeout{60};

  /// DETECTOR_BASE_URL.
  static RemoteDetectorConfig from_env() {
    RemoteDetectorConfig c;
    c.base_url = env_or("DETECTOR_BASE_URL");
    return c;
  }
};

/// POST <base>/detect with
///   {"map_id", "stage": "components"|"legend_units", "width", "height",
///    "image_png_base64"}
/// answered by {"detections": [{"class", "bbox": {x_min,y_min,x_max,y_max}, "score"}]}
/// in the frame of the submitted image.
class RemoteDetectorProvider final : public DetectorProvider {
 public:
  explicit RemoteDetectorProvider(RemoteDetectorConfig config)
      : config_(std::move(config)), endpoint_(parse_endpoint(config_.base_url)) {}

  std::vector<Detection> raw_detect(const DetectRequest& req) override {
    if (!req.image) throw DefinitionError("detect request without image");
    const json body = {{"map_id", req.map_id},
                       {"stage", std::string(to_string(req.stage))},
                       {"width", req.image->width()},
                       {"height", req.image->height()},
                       {"image_png_base64", base64_encode(encode_png(*req.image))}};
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    std::string last_error;
    auto delay = config_.backoff;
    for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
      auto res = client.Post(endpoint_.path + "/detect", body.dump(), "application/json");
      if (res && res->status == 200) {
        try {
          return json::parse(res->body).at("detections").get<std::vector<Detection>>();
        } catch (const std::exception& e) {
          throw ProviderError(fmt::format("malformed detector response: {}", e.what()));
        }
      }
      last_error = res ? fmt::format("HTTP {}", res->status)
                       : fmt::format("transport error: {}", httplib::to_string(res.error()));
      if (res && !transient_status(res->status)) break;
      if (attempt <= config_.max_retries) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
    throw ProviderError(fmt::format("detector endpoint unavailable: {}", last_error));
  }

 private:
  RemoteDetectorConfig config_;
  Endpoint endpoint_;
};

}  // namespace geomap
