#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "geomap/geomap.hpp"

namespace {

using namespace geomap;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

struct Flags {
  std::string config, maps, out, backend, toggles, script, judge_script, templates, metadata, snapshots, annotations;
  std::optional<double> scale;
  std::optional<int> parallel, per_task;
  std::optional<std::uint64_t> seed;
  bool record_timings = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run configuration");
  app->add_option("--maps", f.maps, "Corpus directory");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--backend", f.backend, "Model backend")->check(CLI::IsMember({"remote", "oracle", "scripted", "null"}));
  app->add_option("--script", f.script, "Transcript for the scripted backend");
  app->add_option("--parallel", f.parallel, "Concurrency cap")->check(CLI::PositiveNumber);
  app->add_option("--scale", f.scale, "Resolution scale factor");
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--snapshots", f.snapshots, "Snapshot directory for the expert tools");
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = read_json(f.config).get<RunConfig>();
  if (!f.maps.empty()) c.maps = f.maps;
  if (!f.out.empty()) c.out = f.out;
  if (!f.backend.empty()) c.backend = f.backend;
  if (!f.toggles.empty()) c.toggles = f.toggles;
  if (!f.script.empty()) c.script = f.script;
  if (!f.judge_script.empty()) c.judge_script = f.judge_script;
  if (!f.templates.empty()) c.templates = f.templates;
  if (!f.metadata.empty()) c.metadata = f.metadata;
  if (!f.snapshots.empty()) c.snapshots = f.snapshots;
  if (!f.annotations.empty()) c.annotations = f.annotations;
  if (f.scale) c.scale = *f.scale;
  if (f.parallel) c.parallel = *f.parallel;
  if (f.per_task) c.per_task = *f.per_task;
  if (f.seed) c.seed = *f.seed;
  if (f.record_timings) c.record_timings = true;
  if (auto problems = validate_config(c); !problems.empty()) throw UsageError(problems.front());
  return c;
}

std::unique_ptr<DetectorProvider> make_provider(const RunConfig& c) {
  if (c.backend == "remote" && std::getenv("DETECTOR_BASE_URL"))
    return std::make_unique<RemoteDetectorProvider>(RemoteDetectorConfig::from_env());
  return std::make_unique<AnnotationProvider>(c.annotations_dir());
}

std::shared_ptr<const Snapshots> open_snapshots(const RunConfig& c) {
  const auto dir = c.snapshots_dir();
  if (!fs::is_directory(dir)) return nullptr;
  return std::make_shared<const Snapshots>(dir);
}

/// Digitized metadata for HIE: the configured directory when it exists,
/// otherwise a fresh in-process digitization at the run's scale.
std::map<std::string, MapMetadata> hie_metadata(const RunConfig& c, Backend& backend) {
  if (!c.metadata.empty()) return load_metadata_dir(c.metadata);
  auto provider = make_provider(c);
  ImageStore store(c.maps, load_corpus(c.maps));
  DigitizeOptions opt;
  opt.scale = c.scale;
  opt.parallel = static_cast<std::size_t>(c.parallel);
  opt.max_edge = c.max_edge;
  std::map<std::string, MapMetadata> out;
  for (const auto& doc : load_corpus(c.maps)) out[doc.map_id] = digitize(doc, *store.get(doc.map_id), *provider, backend, opt).meta;
  return out;
}

AnswerRun answer_bench(const std::vector<BenchItem>& bench, const RunConfig& c, const Toggles& toggles,
                       Backend& backend, ImageStore& images) {
  const auto experts = default_expert_group();
  ToolPool tools;
  tools.snapshots = open_snapshots(c);
  std::map<std::string, MapMetadata> meta;
  if (toggles.hie) meta = hie_metadata(c, backend);
  AnswerResources res{&images, &meta, &backend, &experts, &tools};
  return run_answer(bench, c, toggles, res);
}

std::shared_ptr<Backend> judge_for(const RunConfig& c, const std::string& judge, const std::vector<BenchItem>& bench) {
  if (judge == "gt-favoring") return gt_favoring_judge();
  if (judge == "comparable") return comparable_judge();
  return make_judge(c, bench);
}

int run(int argc, char** argv) {
  CLI::App app{"Geologic map digitization, question answering and benchmark scoring"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress at info level");

  Flags f;
  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic map corpus");
  CorpusSpec corpus;
  std::string synth_out = "corpus";
  synth->add_option("--out", synth_out, "Corpus directory")->required();
  synth->add_option("--count", corpus.maps, "Number of maps")->check(CLI::PositiveNumber);
  synth->add_option("--seed", corpus.seed, "Corpus seed");
  synth->add_option("--width", corpus.width, "Image width");
  synth->add_option("--height", corpus.height, "Image height");
  synth->add_option("--chinese-every", corpus.chinese_every, "Every n-th map uses Chinese rock names (0 = none)");

  // digitize
  auto* dig = app.add_subcommand("digitize", "Digitize maps into metadata files");
  add_common(dig, f);
  std::vector<std::string> ids;
  dig->add_option("--ids", ids, "Map ids (default: all)")->delimiter(',');
  dig->add_option("--annotations", f.annotations, "Annotation directory");

  // gen-bench
  auto* gen = app.add_subcommand("gen-bench", "Generate bench items from ground-truth metadata");
  add_common(gen, f);
  gen->add_option("--templates", f.templates, "Template file");
  gen->add_option("--per-task", f.per_task, "Questions per task per map")->check(CLI::PositiveNumber);

  // answer
  auto* ans = app.add_subcommand("answer", "Answer a bench");
  add_common(ans, f);
  std::string bench_path, responses_path, policy = "model";
  ans->add_option("--bench", bench_path, "Bench file")->required();
  ans->add_option("--toggles", f.toggles, "Module toggles: all, none, or e.g. HIE+DKI");
  ans->add_option("--metadata", f.metadata, "Digitized metadata directory");
  ans->add_option("--policy", policy, "model, random or truth")->check(CLI::IsMember({"model", "random", "truth"}));
  ans->add_flag("--record-timings", f.record_timings, "Write per-item timings to the audit");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score responses against a bench");
  add_common(ev, f);
  std::string judge = "backend";
  ev->add_option("--bench", bench_path, "Bench file")->required();
  ev->add_option("--responses", responses_path, "Responses file")->required();
  ev->add_option("--judge-script", f.judge_script, "Transcript for the essay judge");
  ev->add_option("--judge", judge, "backend, gt-favoring or comparable")
      ->check(CLI::IsMember({"backend", "gt-favoring", "comparable"}));

  // report
  auto* rep = app.add_subcommand("report", "Print a score report as a table or CSV");
  std::string report_path, label = "Method";
  bool csv = false;
  rep->add_option("--report", report_path, "report.json")->required();
  rep->add_option("--label", label, "Row label");
  rep->add_flag("--csv", csv, "Per-task CSV instead of the ability table");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Answer and evaluate under several toggle sets or scales");
  add_common(abl, f);
  std::vector<std::string> toggle_sets;
  std::vector<double> scales;
  abl->add_option("--bench", bench_path, "Bench file")->required();
  abl->add_option("--toggles", toggle_sets, "Toggle sets, e.g. all HIE+DKI HIE none");
  abl->add_option("--scales", scales, "Resolution sweep, e.g. 1,0.5,0.25")->delimiter(',');
  abl->add_option("--judge-script", f.judge_script, "Transcript for the essay judge");
  abl->add_option("--judge", judge, "backend, gt-favoring or comparable")
      ->check(CLI::IsMember({"backend", "gt-favoring", "comparable"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  spdlog::set_default_logger(spdlog::stderr_color_st("geomap"));
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  if (*synth) {
    const auto metas = write_corpus(synth_out, corpus);
    fmt::print("wrote {} maps to {}\n", metas.size(), synth_out);
    return kOk;
  }
  if (*rep) {
    const auto r = report_from_json(read_json(report_path));
    fmt::print("{}", csv ? report_csv(r) : report_table(label, r));
    return kOk;
  }

  const RunConfig c = resolve(f);
  if (*dig) {
    auto backend = make_backend(c);
    auto provider = make_provider(c);
    const auto s = run_digitize(c, ids, *provider, *backend);
    for (const auto& w : s.warnings) spdlog::warn("{}", w);
    fmt::print("digitized {} maps into {}\n", s.produced.size(), (c.out / "metadata").string());
    return kOk;
  }
  if (*gen) {
    const auto maps = load_metadata_dir(c.truth_dir());
    std::vector<MapMetadata> ordered;
    for (const auto& doc : load_corpus(c.maps)) {
      auto it = maps.find(doc.map_id);
      if (it == maps.end()) throw LookupError(fmt::format("no ground-truth metadata for map '{}'", doc.map_id));
      ordered.push_back(it->second);
    }
    const auto experts = default_expert_group();
    ToolPool tools;
    tools.snapshots = open_snapshots(c);
    EssaySource essays;
    if (tools.snapshots) essays = knowledge_essay_source(experts, tools);
    GenConfig g{c.seed, c.per_task, 3};
    const auto r = generate_corpus(ordered, load_templates(c), g, essays);
    save_bench(c.out / "bench.json", r.items, r.log);
    fmt::print("generated {} items into {}\n", r.items.size(), (c.out / "bench.json").string());
    return kOk;
  }
  if (*ans) {
    const auto bench = load_bench(bench_path);
    std::vector<AnswerRecord> records;
    if (policy == "random") records = random_responses(bench, c.seed);
    else if (policy == "truth") records = truth_responses(bench);
    else {
      auto backend = make_backend(c, bench);
      ImageStore images(c.maps, load_corpus(c.maps));
      auto r = answer_bench(bench, c, parse_toggles(c.toggles), *backend, images);
      records = std::move(r.records);
      write_json(c.out / "audit" / "answers.json", r.audits);
    }
    save_responses(c.out / "responses.json", records);
    std::size_t failed = 0;
    for (const auto& r : records) failed += r.error.has_value();
    fmt::print("answered {} items ({} without an answer) into {}\n", records.size(), failed,
               (c.out / "responses.json").string());
    return kOk;
  }
  if (*ev) {
    const auto bench = load_bench(bench_path);
    const auto responses = load_responses(responses_path);
    auto judge_backend = judge_for(c, judge, bench);
    ImageStore images(c.maps, load_corpus(c.maps));
    const auto report = evaluate(bench, responses, judge_backend.get(), &images, c);
    write_report(c.out, "Method", report);
    fmt::print("{}", report_table("Method", report));
    return kOk;
  }
  if (*abl) {
    const auto runs = parse_ablation(toggle_sets, scales);
    const auto bench = load_bench(bench_path);
    std::vector<std::pair<std::string, ScoreReport>> reports;
    for (const auto& r : runs) {
      RunConfig rc = c;
      rc.scale = r.scale;
      auto backend = make_backend(rc, bench);
      ImageStore images(rc.maps, load_corpus(rc.maps));
      auto answered = answer_bench(bench, rc, r.toggles, *backend, images);
      auto judge_backend = judge_for(rc, judge, bench);
      auto report = evaluate(bench, answered.records, judge_backend.get(), &images, rc);
      const auto dir = rc.out / r.label;
      save_responses(dir / "responses.json", answered.records);
      write_report(dir, r.label, report);
      reports.emplace_back(r.label, std::move(report));
    }
    const auto table = ablation_table(reports);
    write_file(c.out / "ablation.txt", table);
    fmt::print("{}", table);
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kUsage;
  } catch (const BackendError& e) {
    fmt::print(stderr, "backend error: {}\n", e.what());
    return kBackend;
  } catch (const ProviderError& e) {
    fmt::print(stderr, "detector error: {}\n", e.what());
    return kBackend;
  } catch (const ToolError& e) {
    fmt::print(stderr, "tool error: {}\n", e.what());
    return kBackend;
  } catch (const Error& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kData;
  }
}
