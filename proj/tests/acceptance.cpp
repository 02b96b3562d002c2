// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <random>

#include "golden_cases.hpp"
#include "oracles.hpp"

using namespace geomap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------

Outcome ac1_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  constexpr int kCases = 1000;
  int det_bad = 0, set_bad = 0, rect_bad = 0;
  double det_worst = 0, rect_worst = 0;

  for (int i = 0; i < kCases; ++i) {
    const BBox a = oracle::random_box(rng, 64);
    const BBox b = i % 2 ? oracle::jittered_box(rng, a, 6) : oracle::random_box(rng, 64);
    const double err = std::abs(iou_det(a, b) - oracle::iou_pixels(a, b));
    det_worst = std::max(det_worst, err);
    det_bad += err > 1e-9;
  }
  for (int i = 0; i < kCases; ++i) {
    const auto a = oracle::random_names(rng, 6), b = oracle::random_names(rng, 6);
    set_bad += iou_set_discrete(a, b) != oracle::iou_enumerate(a, b);
  }
  std::uniform_real_distribution<double> shift(-0.6, 0.6);
  for (int i = 0; i < kCases; ++i) {
    const LonLatRange a = oracle::random_range(rng);
    LonLatRange b = oracle::random_range(rng);
    if (i % 4 != 0) {
      const double w = a.east - a.west, h = a.north - a.south;
      b = {a.west + shift(rng) * w, a.east + shift(rng) * w, a.south + shift(rng) * h, a.north + shift(rng) * h};
      if (!b.valid()) b = a;
    }
    const double err = std::abs(iou_set_rect(a, b) - oracle::iou_monte_carlo(a, b, rng, 100'000));
    rect_worst = std::max(rect_worst, err);
    rect_bad += err > 1e-2;
  }
  const double secs = seconds_since(t0);
  return {det_bad == 0 && set_bad == 0 && rect_bad == 0 && secs < 10,
          fmt::format("{} cases each; det max err {:.1e}, set mismatches {}, rect max err {:.4f}; {:.2f} s", kCases,
                      det_worst, set_bad, rect_worst, secs)};
}

// ---------------------------------------------------------------------------

Outcome ac2_random_baseline() {
  oracle::TempDir dir("ac2");
  CorpusSpec cs;
  cs.maps = 24;
  cs.seed = 2;
  const auto specs = corpus_specs(cs);
  std::vector<MapMetadata> maps;
  for (const auto& s : specs) maps.push_back(synth_fixture(s).meta);
  write_snapshots(dir.path(), corpus_extent(specs), cs.seed);
  ToolPool tools;
  tools.snapshots = std::make_shared<Snapshots>(dir.path());
  const auto experts = default_expert_group();
  GenConfig cfg;
  cfg.seed = 42;
  cfg.per_task = 21;
  const auto bench = generate_corpus(maps, default_templates(), cfg, knowledge_essay_source(experts, tools)).items;

  std::map<Task, int> per_task;
  for (const auto& i : bench) ++per_task[i.task];
  int lo = std::numeric_limits<int>::max(), hi = 0;
  for (const auto& [t, n] : per_task) lo = std::min(lo, n), hi = std::max(hi, n);

  RunConfig c;
  c.parallel = 1;
  auto judge = gt_favoring_judge();
  const auto r = evaluate(bench, random_responses(bench, 7), judge.get(), nullptr, c);
  auto score = [&](const char* a) { return r.per_ability.at(a) ? r.per_ability.at(a)->score : -1.0; };
  const bool pass = bench.size() >= 2000 && per_task.size() == kTasks.size() && hi - lo <= hi / 10 &&
                    score("extracting") == 0 && score("grounding") == 0 && score("analyzing") == 0 &&
                    std::abs(score("referring") - 0.25) <= 0.03 && std::abs(score("reasoning") - 0.25) <= 0.03 &&
                    r.overall && std::abs(*r.overall - 0.100) <= 0.012;
  return {pass, fmt::format("{} items, {} tasks ({}..{} per task); E {:.3f} G {:.3f} Ref {:.3f} Rea {:.3f} "
                            "A {:.3f} overall {:.4f}",
                            bench.size(), per_task.size(), lo, hi, score("extracting"), score("grounding"),
                            score("referring"), score("reasoning"), score("analyzing"), r.overall.value_or(-1))};
}

// ---------------------------------------------------------------------------

Outcome ac3_overall() {
  const std::array<double, 5> s = {0.219, 0.128, 0.378, 0.507, 0.612};
  const double v = score_overall(s);
  return {std::abs(v - 0.369) <= 0.0005, fmt::format("overall = {:.6f}", v)};
}

// ---------------------------------------------------------------------------

Outcome ac4_oracle_round_trip() {
  const auto t0 = Clock::now();
  oracle::TempDir dir("ac4");
  CorpusSpec cs;
  cs.maps = 10;
  const auto truth = write_corpus(dir.path(), cs);

  RunConfig c;
  c.maps = dir.path();
  c.parallel = 4;
  ToolPool tools;
  tools.snapshots = std::make_shared<Snapshots>(c.snapshots_dir());
  const auto experts = default_expert_group();
  const auto bench = generate_corpus(truth, default_templates(), {}, knowledge_essay_source(experts, tools)).items;

  std::map<std::string, MapMetadata> truth_by_id;
  for (const auto& m : truth) truth_by_id.emplace(m.map_id, m);
  OracleBackend backend(oracle_knowledge(truth_by_id, bench));

  AnnotationProvider provider(c.annotations_dir());
  ImageStore images(c.maps, load_corpus(c.maps));
  std::map<std::string, MapMetadata> digitized;
  std::size_t digitize_warnings = 0;
  for (const auto& doc : load_corpus(c.maps)) {
    auto r = digitize(doc, *images.get(doc.map_id), provider, backend);
    digitize_warnings += r.warnings.size();
    digitized.emplace(doc.map_id, std::move(r.meta));
  }

  AnswerResources res{&images, &digitized, &backend, &experts, &tools};
  const auto answered = run_answer(bench, c, Toggles{}, res);
  auto judge = comparable_judge();
  const auto report = evaluate(bench, answered.records, judge.get(), &images, c);

  std::vector<std::string> off;
  for (const auto& ti : kTasks) {
    auto it = report.per_task.find(std::string(ti.name));
    if (it == report.per_task.end()) {
      off.push_back(fmt::format("{} missing", ti.name));
      continue;
    }
    const double s = it->second.score;
    const bool ok = ti.ability == Ability::analyzing ? s == 0.5 : ti.ability == Ability::grounding ? s >= 0.99 : s == 1.0;
    if (!ok) off.push_back(fmt::format("{}={:.4f}", ti.name, s));
  }
  const auto& g = report.per_ability.at("grounding");
  const auto& a = report.per_ability.at("analyzing");
  const double secs = seconds_since(t0);
  const bool pass = off.empty() && g && g->score >= 0.99 && a && a->score == 0.5 && secs < 120;
  return {pass, fmt::format("{} items over {} maps; grounding IoU {:.4f}, analyzing {:.3f}, {} off-target tasks{}; "
                            "{} digitize warnings; {:.1f} s",
                            bench.size(), truth.size(), g ? g->score : -1, a ? a->score : -1, off.size(),
                            off.empty() ? "" : " (" + fmt::format("{}", fmt::join(off, ", ")) + ")",
                            digitize_warnings, secs)};
}

// ---------------------------------------------------------------------------

Outcome ac5_order_debias() {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<int> len(1, 40), ch('a', 'z');
  auto text = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += static_cast<char>(ch(rng));
    return s;
  };
  int checked = 0, bad = 0;
  for (const char* verdict : {"A", "B", "C"}) {
    ScriptedBackend judge;
    judge.set_default(fmt::format(R"({{"answer": "{}"}})", verdict));
    for (int i = 0; i < 100; ++i) {
      const auto& ti = info(Task::earthquake_risk);
      const BenchItem item{fmt::format("e{}", i), "m", ti.ability, ti.task, ti.qtype, "Assess the risk.",
                           std::nullopt, Essay{text()}};
      JudgeRecord rec;
      bad += score_eq(item, text(), {}, judge, rec) != 0.5;
      ++checked;
    }
  }
  return {bad == 0, fmt::format("{} pairs under J=1, J=0, J=0.5; {} not exactly 0.5", checked, bad)};
}

// ---------------------------------------------------------------------------

Outcome ac6_median() {
  std::mt19937_64 rng(66);
  std::uniform_int_distribution<int> channel(0, 255), w(8, 48), h(6, 32);
  std::uniform_real_distribution<double> noise(0.0, 0.4);
  int bad = 0;
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const Rgb c{static_cast<std::uint8_t>(channel(rng)), static_cast<std::uint8_t>(channel(rng)),
                static_cast<std::uint8_t>(channel(rng))};
    const double f = i < 10 ? 0.4 : noise(rng);
    worst = std::max(worst, f);
    bad += median_color(oracle::salt_and_pepper(rng, c, w(rng), h(rng), f)) != c;
  }
  return {bad == 0, fmt::format("100 swatches, noise up to {:.0f}%; {} mismatches", worst * 100, bad)};
}

// ---------------------------------------------------------------------------

Outcome ac7_quakes() {
  std::mt19937_64 rng(77);
  const LonLatRange around{-100, -98, 30, 31.5};
  const auto db = oracle::random_quakes(rng, 10'000, around);
  auto key = [](const QuakeRecord& q) { return std::make_tuple(-q.magnitude, q.lon, q.lat, q.year); };
  auto canonical = [&](std::vector<QuakeRecord> v) {
    std::sort(v.begin(), v.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    return v;
  };
  int mismatches = 0;
  std::size_t hits = 0;
  std::vector<LonLatRange> ranges = {around};
  for (int i = 0; i < 19; ++i) ranges.push_back(oracle::random_range(rng));
  for (int i = 0; i < 10; ++i) {
    std::uniform_real_distribution<double> lon(around.west - 1, around.east), lat(around.south - 1, around.north);
    const double w = lon(rng), s = lat(rng);
    ranges.push_back({w, w + 1.2, s, s + 0.9});
  }
  for (const auto& r : ranges) {
    const auto got = query_quakes(db, r);
    const auto want = oracle::quakes_scan(db, r);
    hits += want.size();
    for (std::size_t i = 1; i < got.size(); ++i) mismatches += got[i - 1].magnitude < got[i].magnitude;
    if (canonical(got) != canonical(want)) ++mismatches;
  }
  return {mismatches == 0, fmt::format("10000 records, {} ranges, {} matching events; {} mismatches",
                                       ranges.size(), hits, mismatches)};
}

// ---------------------------------------------------------------------------

Outcome ac8_nms() {
  std::mt19937_64 rng(88);
  std::uniform_int_distribution<int> n(0, 40);
  int mismatches = 0, order_dependent = 0;
  std::size_t suppressed = 0;
  for (int i = 0; i < 500; ++i) {
    auto dets = oracle::random_detections(rng, static_cast<std::size_t>(n(rng)));
    const auto got = nms(dets, 0.8);
    const auto want = oracle::nms_quadratic(dets, 0.8);
    suppressed += dets.size() - want.size();
    mismatches += got != want;
    std::shuffle(dets.begin(), dets.end(), rng);
    order_dependent += nms(dets, 0.8) != got;
  }
  return {mismatches == 0 && order_dependent == 0,
          fmt::format("500 sets, {} suppressed in total; {} mismatches, {} order-dependent", suppressed, mismatches,
                      order_dependent)};
}

// ---------------------------------------------------------------------------

Outcome ac9_prompts() {
  const fs::path golden_dir = fs::path(GEOMAP_SOURCE_DIR) / "tests" / "golden";
  std::vector<std::string> bad;
  std::size_t n = 0;
  for (const auto& [name, text] : golden::cases()) {
    ++n;
    const auto path = golden_dir / name;
    if (!fs::exists(path) || read_file(path) != text) bad.push_back(name);
  }
  const auto cases = golden::cases();
  const bool qa_line = cases[0].second.find("reason and answer the question in JSON format only") != std::string::npos;
  const bool aj_line = cases.back().second.find("Only respond answer with A, B or C") != std::string::npos;
  return {bad.empty() && qa_line && aj_line,
          fmt::format("{} golden files, {} differ{}; QA line {}, AJ line {}", n, bad.size(),
                      bad.empty() ? "" : " (" + fmt::format("{}", fmt::join(bad, ", ")) + ")",
                      qa_line ? "present" : "missing", aj_line ? "present" : "missing")};
}

// ---------------------------------------------------------------------------

int cli(const std::string& args, const fs::path& log) {
  const auto cmd = fmt::format("'{}' {} > '{}' 2>&1", GEOMAP_CLI, args, log.string());
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome ac10_ablation() {
  oracle::TempDir dir("ac10");
  const auto corpus = dir.path() / "corpus";
  const auto log = dir.path() / "log.txt";
  if (cli(fmt::format("synth --out '{}' --count 4 --width 640 --height 480", corpus.string()), log) != 0 ||
      cli(fmt::format("gen-bench --maps '{}' --out '{}'", corpus.string(), dir.path().string()), log) != 0)
    return {false, "corpus setup failed: " + read_file(log)};
  const auto bench = dir.path() / "bench.json";
  write_file(dir.path() / "fixed.json",
             json{{"rules", {{{"match", "[\\s\\S]"}, {"purpose", "gate"}, {"reply", "{}"}}}},
                  {"default", R"({"reason": "fixed", "answer": "A"})"}}
                 .dump());

  auto ablate = [&](const std::string& backend, const fs::path& out) {
    const std::string script = backend == "scripted" ? fmt::format("--script '{}'", (dir.path() / "fixed.json").string()) : "";
    return cli(fmt::format("ablate --maps '{}' --bench '{}' --out '{}' --backend {} {} --judge comparable "
                           "--toggles all HIE+DKI HIE none",
                           corpus.string(), bench.string(), out.string(), backend, script),
               log);
  };
  if (ablate("scripted", dir.path() / "s1") != 0 || ablate("scripted", dir.path() / "s2") != 0)
    return {false, "scripted ablation failed: " + read_file(log)};
  const auto table = read_file(dir.path() / "s1" / "ablation.txt");
  bool same = table == read_file(dir.path() / "s2" / "ablation.txt");
  for (const auto* label : {"all", "HIE+DKI", "HIE", "none"})
    same = same && read_file(dir.path() / "s1" / label / "report.json") == read_file(dir.path() / "s2" / label / "report.json");
  const bool shaped = table.rfind("Ability", 0) == 0 && table.find("Overall") != std::string::npos &&
                      table.find("HIE+DKI") != std::string::npos && table.find("none") != std::string::npos;

  if (ablate("oracle", dir.path() / "o") != 0) return {false, "oracle ablation failed: " + read_file(log)};
  const auto all = report_from_json(json::parse(read_file(dir.path() / "o" / "all" / "report.json")));
  const auto none = report_from_json(json::parse(read_file(dir.path() / "o" / "none" / "report.json")));
  int compared = 0;
  std::vector<std::string> worse;
  for (const auto& ti : kTasks) {
    const bool exact = ti.qtype == QuestionType::MCQ || ti.task == Task::sheet_name || ti.task == Task::scale;
    if (!exact) continue;
    auto a = all.per_task.find(std::string(ti.name));
    auto n = none.per_task.find(std::string(ti.name));
    if (a == all.per_task.end() || n == none.per_task.end()) continue;
    ++compared;
    if (a->second.score < n->second.score) worse.push_back(std::string(ti.name));
  }
  return {same && shaped && worse.empty() && compared > 0,
          fmt::format("scripted reruns {}, table {}; oracle all >= none on {}/{} exact-match tasks", same ? "identical" : "differ",
                      shaped ? "well-formed" : "malformed", compared - static_cast<int>(worse.size()), compared)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1", ac1_metrics},          {"AC2", ac2_random_baseline}, {"AC3", ac3_overall},
      {"AC4", ac4_oracle_round_trip}, {"AC5", ac5_order_debias},   {"AC6", ac6_median},
      {"AC7", ac7_quakes},           {"AC8", ac8_nms},             {"AC9", ac9_prompts},
      {"AC10", ac10_ablation}};
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.pass;
    fmt::print("{} {} {}\n", name, o.pass ? "PASS" : "FAIL", o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
