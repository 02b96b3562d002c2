#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/backend.hpp"
#include "geomap/benchgen.hpp"
#include "geomap/detect.hpp"
#include "geomap/dki.hpp"
#include "geomap/error.hpp"
#include "geomap/hie.hpp"
#include "geomap/image.hpp"
#include "geomap/judge.hpp"
#include "geomap/model.hpp"
#include "geomap/parallel.hpp"
#include "geomap/peqa.hpp"
#include "geomap/remote.hpp"
#include "geomap/scoring.hpp"
#include "geomap/templates.hpp"

namespace geomap {

namespace fs = std::filesystem;

/// Bad command-line usage (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  fs::path maps = "corpus";
  /// Empty paths default to subdirectories of `maps`.
  fs::path annotations, snapshots, metadata, templates;
  fs::path out = "out";
  std::string backend = "oracle";
  fs::path script;
  fs::path judge_script;
  std::string toggles = "all";
  double scale = 1.0;
  int parallel = 4;
  std::uint64_t seed = 42;
  int per_task = 1;
  int max_edge = kDefaultMaxEdge;
  bool record_timings = false;

  fs::path annotations_dir() const { return annotations.empty() ? maps / "annotations" : annotations; }
  fs::path snapshots_dir() const { return snapshots.empty() ? maps / "snapshots" : snapshots; }
  fs::path truth_dir() const { return maps / "metadata"; }
};

inline void from_json(const json& j, RunConfig& c) {
  auto path = [&](const char* key, fs::path& p) {
    if (j.contains(key)) p = j[key].get<std::string>();
  };
  path("maps", c.maps);
  path("annotations", c.annotations);
  path("snapshots", c.snapshots);
  path("metadata", c.metadata);
  path("templates", c.templates);
  path("out", c.out);
  path("script", c.script);
  path("judge_script", c.judge_script);
  c.backend = j.value("backend", c.backend);
  c.toggles = j.value("toggles", c.toggles);
  c.scale = j.value("scale", c.scale);
  c.parallel = j.value("parallel", c.parallel);
  c.seed = j.value("seed", c.seed);
  c.per_task = j.value("per_task", c.per_task);
  c.max_edge = j.value("max_edge", c.max_edge);
  c.record_timings = j.value("record_timings", c.record_timings);
}

inline std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> out;
  if (!(c.scale > 0 && c.scale <= 1)) out.push_back(fmt::format("scale {} must be in (0, 1]", c.scale));
  if (c.parallel < 1) out.push_back(fmt::format("parallel {} must be at least 1", c.parallel));
  if (c.per_task < 1) out.push_back(fmt::format("per_task {} must be at least 1", c.per_task));
  static const std::set<std::string> kBackends = {"remote", "oracle", "scripted", "null"};
  if (!kBackends.count(c.backend)) out.push_back(fmt::format("unknown backend '{}'", c.backend));
  return out;
}

inline void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, j.dump(2) + "\n");
}

inline json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw LookupError(fmt::format("file '{}' not found", path.string()));
  return parse_json(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Files

inline std::vector<MapDocument> load_corpus(const fs::path& dir) {
  return read_json(dir / "corpus.json").at("maps").get<std::vector<MapDocument>>();
}

/// Every `<id>.json` under `dir`, keyed by map id.
inline std::map<std::string, MapMetadata> load_metadata_dir(const fs::path& dir) {
  std::map<std::string, MapMetadata> out;
  if (!fs::is_directory(dir)) throw LookupError(fmt::format("metadata directory '{}' not found", dir.string()));
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    auto m = read_json(e.path()).get<MapMetadata>();
    out.emplace(m.map_id, std::move(m));
  }
  return out;
}

inline std::vector<BenchItem> load_bench(const fs::path& path) {
  const auto j = read_json(path);
  auto items = j.at("items").get<std::vector<BenchItem>>();
  std::set<std::string> ids;
  for (const auto& i : items) {
    if (!ids.insert(i.id).second) throw ParseError(fmt::format("bench: duplicate item id '{}'", i.id));
    if (auto p = validate_item(i); !p.empty()) throw ParseError(fmt::format("bench item {}: {}", i.id, p.front()));
  }
  return items;
}

inline void save_bench(const fs::path& path, const std::vector<BenchItem>& items, const std::vector<std::string>& log) {
  write_json(path, json{{"items", items}, {"log", log}});
}

inline std::vector<AnswerRecord> load_responses(const fs::path& path) {
  return read_json(path).at("responses").get<std::vector<AnswerRecord>>();
}

inline void save_responses(const fs::path& path, const std::vector<AnswerRecord>& r) {
  write_json(path, json{{"responses", r}});
}

inline TemplateSet load_templates(const RunConfig& c) {
  if (c.templates.empty()) return default_templates();
  return templates_from_json(read_json(c.templates));
}

/// Map images by id, rescaled once per scale factor.
class ImageStore {
 public:
  ImageStore(fs::path dir, std::vector<MapDocument> docs) : dir_(std::move(dir)) {
    for (auto& d : docs) docs_.emplace(d.map_id, std::move(d));
  }

  const MapDocument& doc(const std::string& id) const {
    auto it = docs_.find(id);
    if (it == docs_.end()) throw LookupError(fmt::format("unknown map id '{}'", id));
    return it->second;
  }
  bool has(const std::string& id) const { return docs_.count(id) > 0; }

  std::shared_ptr<const Image> get(const std::string& id, double scale = 1.0) {
    std::lock_guard lock(mu_);
    const auto key = std::make_pair(id, scale);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    auto original = load_image(dir_ / doc(id).image);
    auto img = std::make_shared<const Image>(scale == 1.0 ? std::move(original) : rescale(original, scale));
    cache_.emplace(key, img);
    return img;
  }

 private:
  fs::path dir_;
  std::map<std::string, MapDocument> docs_;
  std::mutex mu_;
  std::map<std::pair<std::string, double>, std::shared_ptr<const Image>> cache_;
};

// ---------------------------------------------------------------------------
// Backends

/// Transcript-driven judge that prefers the reference essay whenever it is
/// shown as Answer1 and otherwise prefers Answer2.
inline std::shared_ptr<ScriptedBackend> gt_favoring_judge() {
  auto b = std::make_shared<ScriptedBackend>();
  b->add_rule("Answer1:\\nSeismic risk assessment for ", R"({"answer": "A"})", "judge");
  b->add_rule("[\\s\\S]", R"({"answer": "B"})", "judge");
  return b;
}

/// Judge that calls every pair comparable.
inline std::shared_ptr<ScriptedBackend> comparable_judge() {
  auto b = std::make_shared<ScriptedBackend>();
  b->set_default(R"({"answer": "C"})");
  return b;
}

inline std::shared_ptr<OracleKnowledge> oracle_knowledge(std::map<std::string, MapMetadata> maps,
                                                         const std::vector<BenchItem>& items) {
  auto k = std::make_shared<OracleKnowledge>();
  k->maps = std::move(maps);
  for (const auto& i : items) k->items.emplace(i.id, i);
  return k;
}

/// Backend named by the configuration. The oracle needs ground truth; pass
/// the bench when questions will be answered.
inline std::shared_ptr<Backend> make_backend(const RunConfig& c, const std::vector<BenchItem>& bench = {},
                                             const fs::path& script = {}) {
  if (c.backend == "null") return std::make_shared<NullBackend>();
  if (c.backend == "scripted") {
    const auto& path = script.empty() ? c.script : script;
    if (path.empty()) throw UsageError("scripted backend needs --script");
    return ScriptedBackend::from_json(read_json(path));
  }
  if (c.backend == "oracle") return std::make_shared<OracleBackend>(oracle_knowledge(load_metadata_dir(c.truth_dir()), bench));
  if (c.backend == "remote")
    return std::make_shared<ThrottledBackend>(std::make_shared<RemoteBackend>(RemoteConfig::from_env()), c.parallel);
  throw UsageError(fmt::format("unknown backend '{}'", c.backend));
}

/// Judge for essay scoring: the judge script when given, else the main backend.
inline std::shared_ptr<Backend> make_judge(const RunConfig& c, const std::vector<BenchItem>& bench) {
  if (!c.judge_script.empty()) return ScriptedBackend::from_json(read_json(c.judge_script));
  return make_backend(c, bench);
}

// ---------------------------------------------------------------------------
// Digitize

struct DigitizeSummary {
  std::vector<std::string> produced;
  std::vector<std::string> warnings;
};

/// One metadata file per map under out/metadata and an audit under out/audit.
inline DigitizeSummary run_digitize(const RunConfig& c, std::vector<std::string> ids, DetectorProvider& provider,
                                    Backend& backend) {
  ImageStore store(c.maps, load_corpus(c.maps));
  if (ids.empty())
    for (const auto& d : load_corpus(c.maps)) ids.push_back(d.map_id);
  std::vector<std::string> missing;
  for (const auto& id : ids)
    if (!store.has(id)) missing.push_back(id);
  if (!missing.empty()) throw LookupError(fmt::format("unknown map ids: {}", fmt::join(missing, ", ")));

  DigitizeOptions opt;
  opt.scale = c.scale;
  opt.parallel = static_cast<std::size_t>(c.parallel);
  opt.max_edge = c.max_edge;
  DigitizeSummary summary;
  for (const auto& id : ids) {
    const auto& doc = store.doc(id);
    const auto image = store.get(id);
    auto r = digitize(doc, *image, provider, backend, opt);
    write_json(c.out / "metadata" / (id + ".json"), r.meta);
    write_json(c.out / "audit" / ("digitize-" + id + ".json"), r.audit);
    for (auto& w : r.warnings) summary.warnings.push_back(fmt::format("{}: {}", id, w));
    summary.produced.push_back(id);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Answer

/// Uniform-random responder: a seeded label for MCQ, an empty answer for
/// FITB, and a filler essay for EQ.
inline std::vector<AnswerRecord> random_responses(const std::vector<BenchItem>& bench, std::uint64_t seed) {
  std::vector<AnswerRecord> out;
  for (const auto& item : bench) {
    AnswerRecord r;
    r.item_id = item.id;
    if (item.qtype == QuestionType::MCQ) {
      auto rng = Rng::keyed(fmt::format("random|{}|{}", seed, item.id));
      r.answer = ChoiceLabel{rng.pick(*item.choices).label};
      r.raw = std::get<ChoiceLabel>(*r.answer).label;
    } else if (item.qtype == QuestionType::EQ) {
      r.answer = Essay{"The area may have some seismic risk."};
      r.raw = std::get<Essay>(*r.answer).text;
    } else {
      r.error = "no answer";
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Answers the ground truth itself; the identity responder.
inline std::vector<AnswerRecord> truth_responses(const std::vector<BenchItem>& bench) {
  std::vector<AnswerRecord> out;
  for (const auto& item : bench) out.push_back({item.id, item.ground_truth, "", "", std::nullopt, std::nullopt});
  return out;
}

struct AnswerRun {
  std::vector<AnswerRecord> records;
  std::vector<json> audits;
};

struct AnswerResources {
  ImageStore* images = nullptr;
  /// Digitized metadata by map id, used when HIE is on.
  const std::map<std::string, MapMetadata>* metadata = nullptr;
  Backend* backend = nullptr;
  const ExpertRegistry* experts = nullptr;
  const ToolPool* tools = nullptr;
};

inline AnswerRun run_answer(const std::vector<BenchItem>& bench, const RunConfig& c, const Toggles& toggles,
                            const AnswerResources& res) {
  AnswerRun run;
  run.records.resize(bench.size());
  run.audits.resize(bench.size());
  parallel_for(bench.size(), static_cast<std::size_t>(c.parallel), [&](std::size_t i) {
    const auto& item = bench[i];
    AnswerContext ctx;
    ctx.image = res.images ? res.images->get(item.map_id, c.scale) : nullptr;
    if (res.metadata)
      if (auto it = res.metadata->find(item.map_id); it != res.metadata->end()) ctx.meta = &it->second;
    ctx.backend = res.backend;
    ctx.experts = res.experts;
    ctx.tools = res.tools;
    ctx.toggles = toggles;
    ctx.scale = c.scale;
    ctx.max_edge = c.max_edge;
    ctx.record_timings = c.record_timings;
    auto outcome = answer(item, ctx);
    run.records[i] = std::move(outcome.record);
    run.audits[i] = std::move(outcome.audit);
  });
  return run;
}

// ---------------------------------------------------------------------------
// Evaluate

/// Score every bench item. Items without a response score 0 with a warning;
/// responses naming unknown items are an error, as is an empty response set.
inline ScoreReport evaluate(const std::vector<BenchItem>& bench, const std::vector<AnswerRecord>& responses,
                            Backend* judge, ImageStore* images, const RunConfig& c) {
  if (responses.empty()) throw ParseError("responses file holds no responses");
  std::map<std::string, const AnswerRecord*> by_id;
  std::set<std::string> known;
  for (const auto& i : bench) known.insert(i.id);
  std::vector<std::string> orphans;
  for (const auto& r : responses) {
    if (!known.count(r.item_id)) orphans.push_back(r.item_id);
    else if (!by_id.emplace(r.item_id, &r).second)
      throw ParseError(fmt::format("duplicate response for item '{}'", r.item_id));
  }
  if (!orphans.empty()) throw LookupError(fmt::format("responses for unknown items: {}", fmt::join(orphans, ", ")));

  std::vector<QuestionScore> scores(bench.size());
  std::vector<std::optional<JudgeRecord>> judged(bench.size());
  std::vector<std::string> warnings;
  std::vector<std::size_t> essays;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const auto& item = bench[i];
    scores[i] = {&item, 0.0};
    auto it = by_id.find(item.id);
    if (it == by_id.end()) {
      warnings.push_back(fmt::format("{}: no response, scored 0", item.id));
      continue;
    }
    const auto& answer = it->second->answer;
    if (!answer) continue;
    if (item.qtype == QuestionType::MCQ) scores[i].score = score_mcq(item, *answer);
    else if (item.qtype == QuestionType::FITB) scores[i].score = score_fitb(item, *answer);
    else essays.push_back(i);
  }
  if (!essays.empty() && !judge) throw UsageError("essay items need a judge backend");
  parallel_for(essays.size(), static_cast<std::size_t>(c.parallel), [&](std::size_t k) {
    const std::size_t i = essays[k];
    const auto& item = bench[i];
    const auto& answer = *by_id.at(item.id)->answer;
    std::string text;
    if (const auto* e = std::get_if<Essay>(&answer)) text = e->text;
    else if (const auto* t = std::get_if<TextAnswer>(&answer)) text = t->text;
    ImageAttachment map_image;
    if (images) map_image = whole_image_attachment(images->get(item.map_id), c.max_edge, "map");
    JudgeRecord record;
    scores[i].score = score_eq(item, text, map_image, *judge, record);
    judged[i] = std::move(record);
  });

  auto report = aggregate(scores);
  for (auto& j : judged)
    if (j) report.judge_log.push_back(std::move(*j));
  for (auto& w : warnings) report.warnings.push_back(std::move(w));
  return report;
}

inline void write_report(const fs::path& dir, std::string_view label, const ScoreReport& r) {
  write_json(dir / "report.json", report_to_json(r));
  write_file(dir / "report.txt", report_table(label, r));
  write_file(dir / "report.csv", report_csv(r));
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRun {
  std::string label;
  Toggles toggles;
  double scale = 1.0;
};

/// Rows = abilities plus overall, one column per run.
inline std::string ablation_table(const std::vector<std::pair<std::string, ScoreReport>>& runs) {
  std::string out = fmt::format("{:<12}", "Ability");
  for (const auto& [label, r] : runs) out += fmt::format("{:>14}", label);
  out += "\n";
  auto row = [&](std::string_view name, auto&& value) {
    out += fmt::format("{:<12}", name);
    for (const auto& [label, r] : runs) out += fmt::format("{:>14}", detail::cell(value(r)));
    out += "\n";
  };
  for (auto a : kAbilities) {
    std::string name(to_string(a));
    name[0] = static_cast<char>(name[0] - 'a' + 'A');
    row(name, [&](const ScoreReport& r) -> std::optional<double> {
      const auto& v = r.per_ability.at(std::string(to_string(a)));
      return v ? std::optional<double>(v->score) : std::nullopt;
    });
  }
  row("Overall", [](const ScoreReport& r) { return r.overall; });
  return out;
}

inline std::vector<AblationRun> parse_ablation(const std::vector<std::string>& toggle_sets,
                                               const std::vector<double>& scales) {
  std::vector<AblationRun> runs;
  if (!scales.empty()) {
    if (scales.size() < 2) throw UsageError("a resolution sweep needs at least 2 scales");
    const auto t = toggle_sets.empty() ? Toggles{} : parse_toggles(toggle_sets.front());
    for (double s : scales) {
      if (!(s > 0 && s <= 1)) throw UsageError(fmt::format("scale {} must be in (0, 1]", s));
      runs.push_back({fmt::format("scale={}", format_number(s)), t, s});
    }
    return runs;
  }
  if (toggle_sets.size() < 2) throw UsageError("ablation needs at least 2 toggle sets");
  for (const auto& s : toggle_sets) {
    Toggles t;
    try {
      t = parse_toggles(s);
    } catch (const DefinitionError& e) {
      throw UsageError(e.what());
    }
    runs.push_back({toggles_label(t), t, 1.0});
  }
  return runs;
}

}  // namespace geomap
