#include <gtest/gtest.h>

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "oracles.hpp"

using namespace geomap;
namespace fs = std::filesystem;

namespace {

/// In-process HTTP server on an ephemeral port.
class FakeServer {
 public:
  explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post(R"(/v1/.*)", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return fmt::format("http://127.0.0.1:{}/v1", port_); }
  int hits() const { return hits_; }
  const std::string& last_body() const { return last_body_; }
  const std::string& last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::string last_body_, last_auth_;
};

std::string completion(const std::string& text) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

RemoteConfig fast_config(const std::string& url) {
  RemoteConfig c;
  c.base_url = url;
  c.api_key = "k";
  c.backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::seconds(5);
  return c;
}

CompletionRequest qa_request() {
  CompletionRequest r;
  r.instruction = "Q";
  r.images.push_back({std::make_shared<const Image>(Image(8, 8, {1, 2, 3})), "full", 1.0});
  r.hints = {{"purpose", "qa"}};
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Remote endpoint

TEST(Remote, RetriesTransientFailures) {
  std::atomic<int> n{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    if (n++ < 2) {
      res.status = n == 1 ? 503 : 429;
      return;
    }
    res.set_content(completion(R"({"answer": "A"})"), "application/json");
  });
  RemoteBackend backend(fast_config(server.url()));
  EXPECT_EQ(backend.complete(qa_request()), R"({"answer": "A"})");
  const auto calls = backend.telemetry().snapshot();
  ASSERT_EQ(calls.size(), 1u);
  EXPECT_EQ(calls[0].attempts, 3);
  EXPECT_TRUE(calls[0].ok);
  EXPECT_EQ(server.hits(), 3);
  EXPECT_EQ(server.last_auth(), "Bearer k");

  const auto body = json::parse(server.last_body());
  EXPECT_EQ(body.at("model"), "gpt-4o");
  EXPECT_EQ(body.at("temperature"), 0);
  EXPECT_EQ(body.at("seed"), 42);
  EXPECT_EQ(body.at("response_format").at("type"), "json_object");
  const auto& content = body.at("messages").at(1).at("content");
  EXPECT_EQ(content.at(1).at("image_url").at("url").get<std::string>().rfind("data:image/png;base64,", 0), 0u);
}

TEST(Remote, ExhaustedRetriesRaise) {
  FakeServer server([](const httplib::Request&, httplib::Response& res) { res.status = 502; });
  auto cfg = fast_config(server.url());
  cfg.max_retries = 2;
  RemoteBackend backend(cfg);
  EXPECT_THROW(backend.complete(qa_request()), BackendError);
  EXPECT_EQ(server.hits(), 3);
  const auto calls = backend.telemetry().snapshot();
  ASSERT_EQ(calls.size(), 1u);
  EXPECT_EQ(calls[0].attempts, 3);
  EXPECT_FALSE(calls[0].ok);
}

TEST(Remote, PermanentFailureIsNotRetried) {
  FakeServer server([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  RemoteBackend backend(fast_config(server.url()));
  EXPECT_THROW(backend.complete(qa_request()), BackendError);
  EXPECT_EQ(server.hits(), 1);
}

TEST(Remote, OversizedPayloadNeverSent) {
  FakeServer server([](const httplib::Request&, httplib::Response& res) { res.set_content(completion("x"), "application/json"); });
  auto cfg = fast_config(server.url());
  cfg.max_payload_bytes = 64;
  RemoteBackend backend(cfg);
  EXPECT_THROW(backend.complete(qa_request()), PayloadError);
  EXPECT_EQ(server.hits(), 0);
}

TEST(Remote, DetectorProvider) {
  FakeServer server([](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    EXPECT_EQ(body.at("stage"), "components");
    res.set_content(json{{"detections", {Detection{"title", {1, 1, 5, 5}, 0.9}, Detection{"title", {1, 1, 5, 5}, 0.8}}}}.dump(),
                    "application/json");
  });
  RemoteDetectorConfig cfg;
  cfg.base_url = server.url();
  RemoteDetectorProvider provider(cfg);
  const Image img(16, 16);
  const auto dets = detect(provider, {"m", &img, img.bounds(), DetectStage::components, 1.0});
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_DOUBLE_EQ(dets[0].score, 0.9);
}

// ---------------------------------------------------------------------------
// Command-line contracts

namespace {

struct Run {
  int code;
  std::string output;
};

Run cli(const std::string& args) {
  oracle::TempDir tmp("cli-out");
  const auto log = tmp.path() / "out.txt";
  const std::string cmd = fmt::format("'{}' {} > '{}' 2>&1", GEOMAP_CLI, args, log.string());
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, fs::exists(log) ? read_file(log) : ""};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("cli");
    const auto r = cli(fmt::format("synth --out '{}' --count 4 --width 640 --height 480", corpus().string()));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto g = cli(fmt::format("gen-bench --maps '{}' --out '{}'", corpus().string(), work("gen").string()));
    ASSERT_EQ(g.code, 0) << g.output;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path corpus() { return dir_->path() / "corpus"; }
  static fs::path work(const std::string& name) { return dir_->path() / name; }
  static fs::path bench() { return work("gen") / "bench.json"; }

  static oracle::TempDir* dir_;
};

oracle::TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, GenBenchIsDeterministic) {
  const auto again = cli(fmt::format("gen-bench --maps '{}' --out '{}'", corpus().string(), work("gen2").string()));
  ASSERT_EQ(again.code, 0) << again.output;
  EXPECT_EQ(read_file(bench()), read_file(work("gen2") / "bench.json"));
}

TEST_F(Cli, AnswerThenEvaluate) {
  const auto ans = cli(fmt::format("answer --maps '{}' --bench '{}' --out '{}' --backend oracle --parallel 2",
                                   corpus().string(), bench().string(), work("ans").string()));
  ASSERT_EQ(ans.code, 0) << ans.output;
  const auto again = cli(fmt::format("answer --maps '{}' --bench '{}' --out '{}' --backend oracle --parallel 1",
                                     corpus().string(), bench().string(), work("ans2").string()));
  ASSERT_EQ(again.code, 0) << again.output;
  EXPECT_EQ(read_file(work("ans") / "responses.json"), read_file(work("ans2") / "responses.json"));

  const auto ev = cli(fmt::format("evaluate --maps '{}' --bench '{}' --responses '{}' --out '{}' --judge comparable",
                                  corpus().string(), bench().string(), (work("ans") / "responses.json").string(),
                                  work("eval").string()));
  ASSERT_EQ(ev.code, 0) << ev.output;
  const auto report = report_from_json(json::parse(read_file(work("eval") / "report.json")));
  for (const auto* a : {"extracting", "grounding", "referring", "reasoning"}) {
    ASSERT_TRUE(report.per_ability.at(a)) << a;
    EXPECT_DOUBLE_EQ(report.per_ability.at(a)->score, 1.0) << a;
  }
  EXPECT_DOUBLE_EQ(report.per_ability.at("analyzing")->score, 0.5);

  const auto table = cli(fmt::format("report --report '{}'", (work("eval") / "report.json").string()));
  EXPECT_EQ(table.code, 0);
  EXPECT_NE(table.output.find("Extracting"), std::string::npos);
}

TEST_F(Cli, DigitizeUnknownIdIsDataError) {
  const auto r = cli(fmt::format("digitize --maps '{}' --out '{}' --ids nope", corpus().string(), work("dig").string()));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("nope"), std::string::npos);
}

TEST_F(Cli, DigitizeWritesMetadata) {
  const auto r = cli(fmt::format("digitize --maps '{}' --out '{}' --backend oracle", corpus().string(),
                                 work("dig-ok").string()));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(std::distance(fs::directory_iterator(work("dig-ok") / "metadata"), fs::directory_iterator{}), 4);
}

TEST_F(Cli, EmptyOrOrphanResponsesRejected) {
  oracle::TempDir tmp("resp");
  write_file(tmp.path() / "empty.json", "[]");
  write_file(tmp.path() / "orphan.json", R"([{"item_id": "ghost", "answer": null}])");
  for (const auto* name : {"empty.json", "orphan.json"}) {
    const auto r = cli(fmt::format("evaluate --maps '{}' --bench '{}' --responses '{}' --out '{}' --judge comparable",
                                   corpus().string(), bench().string(), (tmp.path() / name).string(),
                                   (tmp.path() / "out").string()));
    EXPECT_EQ(r.code, 2) << name << ": " << r.output;
  }
}

TEST_F(Cli, SingleToggleSetIsUsageError) {
  const auto r = cli(fmt::format("ablate --maps '{}' --bench '{}' --out '{}' --toggles all", corpus().string(),
                                 bench().string(), work("abl").string()));
  EXPECT_EQ(r.code, 1) << r.output;
  const auto bad = cli(fmt::format("ablate --maps '{}' --bench '{}' --out '{}' --toggles all HIE+XYZ",
                                   corpus().string(), bench().string(), work("abl").string()));
  EXPECT_EQ(bad.code, 1) << bad.output;
}

TEST_F(Cli, RandomPolicyAndCsv) {
  const auto ans = cli(fmt::format("answer --maps '{}' --bench '{}' --out '{}' --policy random", corpus().string(),
                                   bench().string(), work("rnd").string()));
  ASSERT_EQ(ans.code, 0) << ans.output;
  const auto ev = cli(fmt::format("evaluate --maps '{}' --bench '{}' --responses '{}' --out '{}' --judge gt-favoring",
                                  corpus().string(), bench().string(), (work("rnd") / "responses.json").string(),
                                  work("rnd-eval").string()));
  ASSERT_EQ(ev.code, 0) << ev.output;
  const auto csv = cli(fmt::format("report --csv --report '{}'", (work("rnd-eval") / "report.json").string()));
  EXPECT_EQ(csv.output.rfind("task,ability,score,n\n", 0), 0u) << csv.output;
}

TEST_F(Cli, RemoteBackendWithoutEndpointFails) {
  const auto r = cli(fmt::format("answer --maps '{}' --bench '{}' --out '{}' --backend remote", corpus().string(),
                                 bench().string(), work("remote").string()));
  EXPECT_NE(r.code, 0);
}
