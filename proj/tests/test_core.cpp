#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace geomap;

namespace {

BenchItem item_of(Task t, AnswerValue gt, std::string id = "m-0") {
  const auto& ti = info(t);
  BenchItem it{id, "m", ti.ability, t, ti.qtype, "q", std::nullopt, std::move(gt)};
  if (ti.qtype == QuestionType::MCQ)
    it.choices = std::vector<Choice>{{"A", "a"}, {"B", "b"}, {"C", "c"}, {"D", "d"}};
  return it;
}

MapMetadata sample_meta() {
  MapMetadata m;
  m.map_id = "m";
  m.sheet_name = "Cedar Ridge";
  m.scale = "1:24000";
  m.lonlat = LonLatRange{-82.0, -81.5, 35.0, 35.25};
  m.neighbors = std::set<std::string>{"Ashford"};
  m.components = {{ComponentKind::title, {10, 10, 200, 40}, 0.9, json::object()},
                  {ComponentKind::main_map, {10, 50, 300, 300}, 0.9, json::object()},
                  {ComponentKind::legend, {302, 50, 420, 300}, 0.9, json::object()}};
  LegendUnit u;
  u.text_bbox = {320, 60, 400, 70};
  u.color_bbox = {305, 60, 318, 70};
  u.rock_name = "limestone";
  u.color = {93, 28, 28};
  m.legend_units = {u};
  m.rock_areas = {{"limestone", 0.6}, {"shale", 0.4}};
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Geometry and images

TEST(Crop, IdentityBoxReturnsSameImage) {
  Image img(17, 9, {1, 2, 3});
  img.set(4, 5, {9, 9, 9});
  EXPECT_EQ(crop(img, img.bounds()), img);
}

TEST(Crop, DimensionsAndOrigin) {
  Image img(100, 100);
  img.set(10, 20, {7, 8, 9});
  const auto c = crop(img, {10, 20, 30, 50});
  EXPECT_EQ(c.width(), 20);
  EXPECT_EQ(c.height(), 30);
  EXPECT_EQ(c.at(0, 0), (Rgb{7, 8, 9}));
}

TEST(Crop, ZeroWidthBoxIsBoundsError) {
  Image img(100, 100);
  EXPECT_THROW(crop(img, {0, 0, 0, 10}), BoundsError);
  try {
    crop(img, {0, 0, 101, 10});
  } catch (const BoundsError& e) {
    EXPECT_NE(std::string(e.what()).find("x_max"), std::string::npos);
  }
}

TEST(Crop, NestedCropsCompose) {
  std::mt19937_64 rng(11);
  Image img(64, 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) img.set(x, y, {static_cast<std::uint8_t>(x * 3), static_cast<std::uint8_t>(y * 5), 7});
  for (int i = 0; i < 200; ++i) {
    const BBox outer = oracle::random_box(rng, 47);
    const auto first = crop(img, outer);
    const BBox inner = oracle::random_box(rng, std::min(outer.width(), outer.height()));
    if (inner.x_max > first.width() || inner.y_max > first.height()) continue;
    EXPECT_EQ(crop(first, inner), crop(img, inner.translated(outer.x_min, outer.y_min)));
  }
}

TEST(Image, PngRoundTrip) {
  Image img(5, 4, {10, 20, 30});
  img.set(2, 1, {255, 0, 128});
  EXPECT_EQ(decode_png(encode_png(img)), img);
}

TEST(Image, Base64RoundTrip) {
  for (const std::string& s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)})
    EXPECT_EQ(base64_decode(base64_encode(s)), s);
  EXPECT_EQ(base64_encode("Man"), "TWFu");
}

TEST(Image, HexColors) {
  EXPECT_EQ(parse_hex("#5D1C1C"), (Rgb{93, 28, 28}));
  EXPECT_EQ(to_hex({93, 28, 28}), "#5D1C1C");
}

// ---------------------------------------------------------------------------
// Metadata validation

TEST(ValidateMetadata, WellFormedIsEmpty) {
  EXPECT_TRUE(validate_metadata(sample_meta(), ImageSize{1024, 768}).empty());
}

TEST(ValidateMetadata, DegenerateBoxNamed) {
  auto m = sample_meta();
  m.components[0].bbox = {10, 10, 10, 40};
  const auto v = validate_metadata(m, ImageSize{1024, 768});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("(10, 10, 10, 40)"), std::string::npos);
}

TEST(ValidateMetadata, RockAreasSumNamed) {
  auto m = sample_meta();
  m.rock_areas = {{"a", 0.5}, {"b", 0.4}, {"c", 0.4}};
  const auto v = validate_metadata(m, ImageSize{1024, 768});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("rock_areas"), std::string::npos);
}

TEST(ValidateMetadata, BoxOutsideImage) {
  auto m = sample_meta();
  EXPECT_FALSE(validate_metadata(m, ImageSize{250, 250}).empty());
  EXPECT_TRUE(validate_metadata(m).empty());
}

TEST(Json, MetadataRoundTrip) {
  const auto m = sample_meta();
  EXPECT_EQ(json(m).get<MapMetadata>(), m);
}

TEST(Json, BenchItemRoundTrip) {
  for (const auto& ti : kTasks) {
    AnswerValue gt;
    switch (ti.shape) {
      case AnswerShape::choice_label: gt = ChoiceLabel{"C"}; break;
      case AnswerShape::text: gt = TextAnswer{"Cedar Ridge"}; break;
      case AnswerShape::bbox: gt = BBox{1, 2, 3, 4}; break;
      case AnswerShape::name_set: gt = NameSet{{"x", "y"}}; break;
      case AnswerShape::lonlat: gt = LonLatRange{-1, 1, -2, 2}; break;
      case AnswerShape::essay: gt = Essay{"e"}; break;
    }
    const auto it = item_of(ti.task, gt, std::string(ti.name));
    EXPECT_TRUE(validate_item(it).empty());
    EXPECT_EQ(json(it).get<BenchItem>(), it);
  }
}

TEST(Tasks, TwentyFiveTasksAcrossFiveAbilities) {
  std::map<Ability, int> n;
  for (const auto& ti : kTasks) ++n[ti.ability];
  EXPECT_EQ(kTasks.size(), 25u);
  EXPECT_EQ(n[Ability::extracting], 4);
  EXPECT_EQ(n[Ability::grounding], 14);
  EXPECT_EQ(n[Ability::referring], 2);
  EXPECT_EQ(n[Ability::reasoning], 4);
  EXPECT_EQ(n[Ability::analyzing], 1);
}

// ---------------------------------------------------------------------------
// Text normalization

TEST(Normalize, ScaleSeparators) { EXPECT_EQ(normalize_text("  1:24,000 "), "1:24000"); }
TEST(Normalize, PunctuationAndCase) { EXPECT_EQ(normalize_text("Pueblo."), normalize_text("pueblo")); }
TEST(Normalize, CjkPassesThrough) {
  EXPECT_EQ(normalize_text("  石灰岩   砂岩 "), "石灰岩 砂岩");
}

// ---------------------------------------------------------------------------
// Type scores

TEST(IouDet, Examples) {
  EXPECT_DOUBLE_EQ(iou_det({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou_det({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_NEAR(iou_det({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(oracle::iou_pixels({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0, 1e-12);
}

TEST(IouDet, MatchesRasterOracle) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 300; ++i) {
    const BBox a = oracle::random_box(rng, 1000);
    const BBox b = i % 2 ? oracle::random_box(rng, 1000) : oracle::jittered_box(rng, a, 60);
    const double v = iou_det(a, b);
    EXPECT_NEAR(v, oracle::iou_pixels(a, b), 1e-9);
    EXPECT_DOUBLE_EQ(v, iou_det(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v == 1.0, a == b);
  }
}

TEST(IouSetDiscrete, Examples) {
  EXPECT_DOUBLE_EQ(iou_set_discrete({"a", "b"}, {"a", "b"}), 1.0);
  EXPECT_NEAR(iou_set_discrete({"a", "b"}, {"b", "c"}), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(iou_set_discrete({}, {"x"}), 0.0);
  EXPECT_DOUBLE_EQ(iou_set_discrete({}, {}), 1.0);
}

TEST(IouSetDiscrete, MatchesEnumeration) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto a = oracle::random_names(rng, 6), b = oracle::random_names(rng, 6);
    EXPECT_EQ(iou_set_discrete(a, b), oracle::iou_enumerate(a, b));
  }
}

TEST(IouSetRect, Examples) {
  const LonLatRange a{10, 20, 0, 10}, b{15, 25, 0, 10};
  EXPECT_DOUBLE_EQ(iou_set_rect(a, a), 1.0);
  EXPECT_NEAR(iou_set_rect(a, b), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(iou_set_rect(a, {30, 40, 20, 30}), 0.0);
  std::mt19937_64 rng(9);
  EXPECT_NEAR(oracle::iou_monte_carlo(a, b, rng), 1.0 / 3.0, 1e-2);
}

TEST(IouSetRect, MatchesMonteCarloAndIsSymmetric) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 40; ++i) {
    const auto a = oracle::random_range(rng);
    auto b = oracle::random_range(rng);
    if (i % 2) b = {a.west + 0.3, a.east + 0.2, a.south - 0.1, a.north + 0.4};
    const double v = iou_set_rect(a, b);
    EXPECT_NEAR(v, oracle::iou_monte_carlo(a, b, rng, 200'000), 1e-2);
    EXPECT_DOUBLE_EQ(v, iou_set_rect(b, a));
  }
}

TEST(ScoreMcq, Examples) {
  const auto it = item_of(Task::area_comparison, ChoiceLabel{"B"});
  EXPECT_EQ(score_mcq(it, ChoiceLabel{"B"}), 1.0);
  EXPECT_EQ(score_mcq(it, ChoiceLabel{"C"}), 0.0);
  EXPECT_EQ(score_mcq(it, ChoiceLabel{"b."}), 1.0);
  EXPECT_EQ(score_mcq(it, TextAnswer{"B"}), 0.0);
  EXPECT_THROW(score_mcq(item_of(Task::sheet_name, TextAnswer{"x"}), ChoiceLabel{"A"}), DefinitionError);
}

TEST(ScoreFitb, Examples) {
  EXPECT_EQ(score_fitb(item_of(Task::legend_by_name, BBox{1, 2, 30, 40}), BBox{1, 2, 30, 40}), 1.0);
  EXPECT_NEAR(score_fitb(item_of(Task::index_map, NameSet{{"Pueblo", "Lamar"}}), NameSet{{"Denver", "Pueblo"}}),
              1.0 / 3.0, 1e-12);
  EXPECT_EQ(score_fitb(item_of(Task::sheet_name, TextAnswer{"Cedar Ridge"}), TextAnswer{" cedar  ridge."}), 1.0);
  EXPECT_EQ(score_fitb(item_of(Task::scale, TextAnswer{"1:24000"}), TextAnswer{"1:24,000"}), 1.0);
  EXPECT_EQ(score_fitb(item_of(Task::legend_by_name, BBox{1, 2, 30, 40}), TextAnswer{"x"}), 0.0);
}

// ---------------------------------------------------------------------------
// Aggregation

TEST(Aggregate, AbilityAndOverall) {
  EXPECT_DOUBLE_EQ(score_ability(std::vector<double>{1.0, 1.0}), 1.0);
  EXPECT_DOUBLE_EQ(score_ability(std::vector<double>{1.0, 0.0}), 0.5);
  EXPECT_THROW(score_ability(std::vector<double>{}), DefinitionError);
  EXPECT_NEAR(score_overall(std::vector<double>{0, 0, 0.25, 0.25, 0}), 0.100, 1e-12);
  EXPECT_DOUBLE_EQ(score_overall(std::vector<double>{1, 1, 1, 1, 1}), 1.0);
  EXPECT_NEAR(score_overall(std::vector<double>{0.219, 0.128, 0.378, 0.507, 0.612}), 0.369, 5e-4);
  EXPECT_THROW(score_overall(std::vector<double>{1, 1}), DefinitionError);
}

TEST(Aggregate, MeanOfMeansOnUnbalancedSets) {
  std::vector<BenchItem> items;
  std::vector<QuestionScore> scores;
  // 1 extracting item at 1.0, 9 grounding items at 0.0, one each elsewhere at 0.5.
  items.push_back(item_of(Task::sheet_name, TextAnswer{"x"}, "e0"));
  for (int i = 0; i < 9; ++i) items.push_back(item_of(Task::title_by_name, BBox{0, 0, 1, 1}, fmt::format("g{}", i)));
  items.push_back(item_of(Task::color_by_rock, ChoiceLabel{"A"}, "r0"));
  items.push_back(item_of(Task::area_comparison, ChoiceLabel{"A"}, "s0"));
  items.push_back(item_of(Task::earthquake_risk, Essay{"x"}, "a0"));
  for (const auto& it : items)
    scores.push_back({&it, it.ability == Ability::extracting ? 1.0 : it.ability == Ability::grounding ? 0.0 : 0.5});
  const auto r = aggregate(scores);
  ASSERT_TRUE(r.overall);
  EXPECT_NEAR(*r.overall, (1.0 + 0.0 + 0.5 + 0.5 + 0.5) / 5.0, 1e-12);
  EXPECT_EQ(r.per_ability.at("grounding")->n, 9u);
}

TEST(Aggregate, MissingAbilityLeavesOverallNull) {
  const auto it = item_of(Task::sheet_name, TextAnswer{"x"});
  const std::vector<QuestionScore> s = {{&it, 1.0}};
  const auto r = aggregate(s);
  EXPECT_FALSE(r.overall);
  EXPECT_FALSE(r.per_ability.at("grounding"));
}

TEST(Report, JsonRoundTripAndTableColumns) {
  const auto a = item_of(Task::sheet_name, TextAnswer{"x"}, "a");
  const std::vector<QuestionScore> s = {{&a, 1.0}};
  auto r = aggregate(s);
  r.judge_log.push_back({"e", JudgeVerdict{1.0, 'A', JudgeOrder::kept}, JudgeVerdict{0.0, 'B', JudgeOrder::swapped},
                         std::nullopt, 0.5});
  const auto j = report_to_json(r);
  EXPECT_EQ(report_to_json(report_from_json(j)), j);
  const auto table = report_table("Oracle", r);
  const auto pos = [&](const char* k) { return table.find(k); };
  EXPECT_LT(pos("Extracting"), pos("Grounding"));
  EXPECT_LT(pos("Grounding"), pos("Referring"));
  EXPECT_LT(pos("Referring"), pos("Reasoning"));
  EXPECT_LT(pos("Reasoning"), pos("Analyzing"));
  EXPECT_LT(pos("Analyzing"), pos("Overall"));
  EXPECT_EQ(report_csv(r), "task,ability,score,n\nsheet_name,extracting,1.000000,1\n");
}

// ---------------------------------------------------------------------------
// Judge

namespace {
BenchItem essay_item() { return item_of(Task::earthquake_risk, Essay{"Seismic risk assessment for X.\nlow"}, "eq"); }
}  // namespace

TEST(Judge, VerdictValues) {
  ScriptedBackend a;
  a.set_default(R"({"answer": "A"})");
  EXPECT_DOUBLE_EQ(judge_pair("q", "x", "y", {}, a).value, 1.0);
  ScriptedBackend c;
  c.set_default("{\"answer\": \"C\"}");
  EXPECT_DOUBLE_EQ(judge_pair("q", "x", "y", {}, c).value, 0.5);
}

TEST(Judge, ProseExhaustsReasks) {
  ScriptedBackend b;
  b.set_default("I think the first one is nicer overall.");
  EXPECT_THROW(judge_pair("q", "x", "y", {}, b), JudgeError);
  EXPECT_EQ(b.calls(), 1 + kDefaultReasks);
}

TEST(Judge, ReaskRecoversWithSuffix) {
  ScriptedBackend b;
  b.add_rule("Respond with JSON only\\.$", R"({"answer": "B"})");
  b.set_default("prose");
  const auto v = judge_pair("q", "x", "y", {}, b);
  EXPECT_EQ(v.raw_choice, 'B');
  EXPECT_EQ(b.calls(), 2);
}

TEST(ScoreEq, Examples) {
  const auto it = essay_item();
  JudgeRecord rec;
  ScriptedBackend both_c;
  both_c.set_default(R"({"answer": "C"})");
  EXPECT_DOUBLE_EQ(score_eq(it, "cand", {}, both_c, rec), 0.5);
  EXPECT_EQ(both_c.calls(), 2);

  // Candidate preferred in both orders: A when it is Answer1, B when second.
  ScriptedBackend wins;
  wins.add_rule("Answer1:\\ncand\\n", R"({"answer": "A"})");
  wins.set_default(R"({"answer": "B"})");
  EXPECT_DOUBLE_EQ(score_eq(it, "cand", {}, wins, rec), 1.0);
  EXPECT_EQ(rec.kept->raw_choice, 'A');
  EXPECT_EQ(rec.swapped->raw_choice, 'B');
}

TEST(ScoreEq, ConstantJudgeGivesHalf) {
  std::mt19937_64 rng(3);
  for (const char* reply : {R"({"answer": "A"})", R"({"answer": "B"})", R"({"answer": "C"})"}) {
    ScriptedBackend b;
    b.set_default(reply);
    for (int i = 0; i < 20; ++i) {
      JudgeRecord rec;
      const auto cand = fmt::format("candidate essay {}", rng() % 1000);
      EXPECT_EQ(score_eq(essay_item(), cand, {}, b, rec), 0.5);
    }
  }
}

TEST(ScoreEq, JudgeFailureScoresZeroAndFlags) {
  NullBackend b;
  JudgeRecord rec;
  EXPECT_EQ(score_eq(essay_item(), "cand", {}, b, rec), 0.0);
  EXPECT_TRUE(rec.error);
}

TEST(ScoreEq, AttachesWholeImage) {
  auto img = std::make_shared<const Image>(3000, 1500);
  const auto att = whole_image_attachment(img, 2048, "map");
  EXPECT_EQ(att.image->width(), 2048);
  EXPECT_NEAR(att.downscale, 2048.0 / 3000.0, 1e-12);
  ScriptedBackend b;
  b.set_default(R"({"answer": "C"})");
  JudgeRecord rec;
  score_eq(essay_item(), "cand", att, b, rec);
  EXPECT_DOUBLE_EQ(rec.downscale, att.downscale);
}

// ---------------------------------------------------------------------------
// NMS and detectors

TEST(Nms, Examples) {
  const BBox a{0, 0, 100, 100};
  const BBox b{0, 0, 100, 90};  // IoU 0.9
  ASSERT_NEAR(iou_det(a, b), 0.9, 1e-12);
  auto out = nms({{"title", b, 0.8}, {"title", a, 0.9}});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].bbox, a);

  const BBox c{0, 0, 100, 100}, d{0, 0, 150, 100};  // IoU 2/3
  EXPECT_EQ(nms({{"title", c, 0.9}, {"title", d, 0.8}}).size(), 2u);
  EXPECT_TRUE(nms({}).empty());
  EXPECT_EQ(nms({{"title", a, 0.9}, {"legend", b, 0.8}}).size(), 2u);
}

TEST(Nms, MatchesQuadraticReferenceAndIgnoresOrder) {
  std::mt19937_64 rng(808);
  for (int i = 0; i < 150; ++i) {
    auto dets = oracle::random_detections(rng, 1 + rng() % 25);
    const auto ref = oracle::nms_quadratic(dets, kNmsIouThreshold);
    EXPECT_EQ(nms(dets), ref);
    std::shuffle(dets.begin(), dets.end(), rng);
    EXPECT_EQ(nms(dets), ref);
  }
}

TEST(AnnotationProvider, PassThroughAndCropFrame) {
  oracle::TempDir dir("ann");
  const std::vector<Detection> comps = {{"title", {10, 10, 200, 40}, 0.9}, {"legend", {300, 50, 500, 300}, 0.95}};
  const std::vector<Detection> units = {{"text_unit", {340, 60, 480, 80}, 0.9}, {"color_unit", {310, 60, 330, 80}, 0.9}};
  write_file(dir.path() / "m.json", json{{"map_id", "m"}, {"components", comps}, {"legend_units", units}}.dump());
  AnnotationProvider p(dir.path());
  Image img(600, 400);
  auto got = detect(p, {"m", &img, img.bounds(), DetectStage::components, 1.0});
  EXPECT_EQ(got, nms(comps));

  const BBox legend{300, 50, 500, 300};
  const Image legend_img = crop(img, legend);
  got = detect(p, {"m", &legend_img, legend, DetectStage::legend_units, 1.0});
  ASSERT_EQ(got.size(), 2u);
  for (const auto& d : got) {
    const auto& src = d.cls == "text_unit" ? units[0] : units[1];
    EXPECT_EQ(d.bbox.translated(legend.x_min, legend.y_min), src.bbox);
  }
  EXPECT_THROW(p.raw_detect({"nope", &img, img.bounds(), DetectStage::components, 1.0}), LookupError);
  AnnotationProvider missing(dir.path() / "absent");
  EXPECT_THROW(missing.raw_detect({"m", &img, img.bounds(), DetectStage::components, 1.0}), ProviderError);
}

// ---------------------------------------------------------------------------
// Geo database

namespace {
QuakeRecord quake(double lon, double lat, double mag, int year) { return {lon, lat, mag, year, std::nullopt}; }
}  // namespace

TEST(QueryQuakes, Boundaries) {
  const LonLatRange r{0, 10, 0, 10};
  EXPECT_TRUE(query_quakes({quake(5, 5, 2.5, 1980)}, r).empty());
  EXPECT_TRUE(query_quakes({quake(5, 5, 4.0, 1965)}, r).empty());
  EXPECT_EQ(query_quakes({quake(5, 5, 2.6, 1970)}, r).size(), 1u);
  EXPECT_EQ(query_quakes({quake(0, 10, 3.0, 1990)}, r).size(), 1u);
}

TEST(QueryQuakes, TenRecordFixture) {
  const LonLatRange r{-82.0, -81.5, 35.0, 35.25};
  const std::vector<QuakeRecord> db = {
      quake(-81.7, 35.1, 3.1, 1975), quake(-81.7, 35.1, 2.5, 1999), quake(-81.9, 35.2, 4.4, 1969),
      quake(-80.0, 35.1, 5.0, 2001), quake(-81.6, 35.05, 2.9, 2010), quake(-81.55, 35.24, 6.0, 1970),
      quake(-81.8, 34.9, 3.3, 1990), quake(-81.75, 35.2, 1.0, 2020), quake(-81.51, 35.01, 3.6, 2022),
      quake(-83.0, 36.0, 7.0, 2000)};
  const auto got = query_quakes(db, r);
  ASSERT_EQ(got.size(), 4u);
  EXPECT_EQ(got[0].magnitude, 6.0);
  EXPECT_EQ(got[1].magnitude, 3.6);
  EXPECT_EQ(got[2].magnitude, 3.1);
  EXPECT_EQ(got[3].magnitude, 2.9);
}

TEST(QueryQuakes, EqualsBruteForceScan) {
  std::mt19937_64 rng(1970);
  for (int round = 0; round < 20; ++round) {
    const auto r = oracle::random_range(rng);
    const auto db = oracle::random_quakes(rng, 500, r);
    auto got = query_quakes(db, r);
    auto want = oracle::quakes_scan(db, r);
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_GE(got[i - 1].magnitude, got[i].magnitude);
    auto key = [](const QuakeRecord& q) { return std::tuple(q.lon, q.lat, q.magnitude, q.year); };
    auto by_key = [&](const QuakeRecord& a, const QuakeRecord& b) { return key(a) < key(b); };
    std::sort(got.begin(), got.end(), by_key);
    std::sort(want.begin(), want.end(), by_key);
    EXPECT_EQ(got, want);
  }
}

TEST(QueryQuakes, CsvRoundTripAndErrors) {
  const std::vector<QuakeRecord> db = {quake(-81.7, 35.1, 3.1, 1975), {-81.0, 35.0, 4.5, 2001, 12.5}};
  EXPECT_EQ(parse_quake_csv(format_quake_csv(db)), db);
  EXPECT_THROW(parse_quake_csv("lon,lat,mag,year\n1,2,0,1999\n"), ParseError);
  EXPECT_THROW(parse_quake_csv("1,2\n"), ParseError);
}

TEST(QueryFaults, InsideOutsideCrossing) {
  const LonLatRange r{0, 10, 0, 10};
  const FaultRecord inside{"in", {{2, 2}, {3, 3}}, std::nullopt};
  const FaultRecord outside{"out", {{20, 20}, {30, 25}}, std::nullopt};
  const FaultRecord crossing{"cross", {{-5, 5}, {5, 5}}, "strike-slip"};
  const FaultRecord corner_miss{"corner", {{-1, 9}, {1, 12}}, std::nullopt};  // passes above (0,10)
  const auto got = query_faults({inside, outside, crossing, corner_miss}, r);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].name, "in");
  EXPECT_EQ(got[1].name, "cross");
}

TEST(QueryFaults, SegmentTestAgreesWithSampling) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> c(-5, 15);
  const LonLatRange r{0, 10, 0, 10};
  for (int i = 0; i < 400; ++i) {
    const LonLat p{c(rng), c(rng)}, q{c(rng), c(rng)};
    bool hit = false;
    for (int k = 0; k <= 20000 && !hit; ++k) {
      const double t = k / 20000.0;
      hit = r.contains(p.lon + t * (q.lon - p.lon), p.lat + t * (q.lat - p.lat));
    }
    // Sampling can miss a grazing clip; it never reports a false hit.
    if (hit) EXPECT_TRUE(segment_intersects(p, q, r));
  }
}

TEST(RasterStats, UniformSumAndHistogram) {
  Raster pop{{0.0, 2.0, 1.0, 2, 2, "float32"}, {5, 5, 5, 5}};
  EXPECT_EQ(raster_stats(pop, {0, 2, 0, 2}, RasterMode::sum)["sum"], 20.0);
  std::vector<std::string> warnings;
  EXPECT_TRUE(raster_stats(pop, {10, 12, 10, 12}, RasterMode::sum, &warnings).empty());
  EXPECT_EQ(warnings.size(), 1u);

  Raster cover{{0.0, 2.0, 1.0, 2, 2, "uint8"}, {10, 10, 20, 10}};
  const auto h = raster_stats(cover, {0, 2, 0, 2}, RasterMode::histogram);
  EXPECT_EQ(h["histogram"], (json{{"10", 3}, {"20", 1}}));
  EXPECT_EQ(decode_raster(cover.header, encode_raster(cover)).values, cover.values);
}

TEST(Snapshots, MissingFileNamesIt) {
  oracle::TempDir dir("snap");
  Snapshots s(dir.path());
  try {
    s.quakes();
    FAIL();
  } catch (const ToolError& e) {
    EXPECT_NE(std::string(e.what()).find("quakes.csv"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Lithology

TEST(Lithology, LookupExamples) {
  const auto& t = default_lithology_table();
  EXPECT_EQ(lookup_lithology("limestone", t)->cls, "Sedimentary");
  EXPECT_EQ(lookup_lithology("limestone", t)->subclass, "Carbonate");
  EXPECT_EQ(lookup_lithology("LIMESTONE", t), lookup_lithology("limestone", t));
  const auto s = lookup_lithology("sandy slate", t);
  EXPECT_EQ(s->cls, "Metamorphic");
  EXPECT_EQ(s->subclass, "Slate");
  const auto fallback = lookup_lithology("gray sandy slate with quartz veins", t);
  ASSERT_TRUE(fallback);
  EXPECT_EQ(fallback->lithology, "sandy slate");
  EXPECT_FALSE(fallback->exact);
  EXPECT_FALSE(lookup_lithology("unobtainium", t));
}

TEST(Lithology, SampleRowsPresent) {
  const std::vector<std::array<std::string, 3>> rows = {
      {"Sedimentary", "Clastic", "conglomerate"}, {"Sedimentary", "Clastic", "tillite"},
      {"Sedimentary", "Clastic", "breccia"},      {"Sedimentary", "Carbonate", "limestone"},
      {"Sedimentary", "Carbonate", "marl"},       {"Volcanic", "Acid volcanic", "trachydacite"},
      {"Volcanic", "Acid volcanic", "keratophyre"}, {"Volcanic", "Acid volcanic", "quartz keratophyre"},
      {"Volcanic", "Alkali volcanic", "analcimite"}, {"Volcanic", "Alkali volcanic", "leucitite"},
      {"Intrusive", "Acid intrusive", "tonalite"}, {"Intrusive", "Acid intrusive", "plagiogranite"},
      {"Intrusive", "Alkaline intrusive", "foid diorite"}, {"Intrusive", "Alkaline intrusive", "foid gabbro"},
      {"Metamorphic", "Slate", "siliceous slate"}, {"Metamorphic", "Slate", "charcoal slate"},
      {"Metamorphic", "Slate", "sandy slate"},    {"Metamorphic", "Schist", "graphitic schist"},
      {"Metamorphic", "Schist", "actinolite schist"}, {"Metamorphic", "Schist", "amphibole schist"}};
  for (const auto& [cls, sub, lith] : rows) {
    const auto m = lookup_lithology(lith, default_lithology_table());
    ASSERT_TRUE(m) << lith;
    EXPECT_TRUE(m->exact);
    EXPECT_EQ(m->cls, cls) << lith;
    EXPECT_EQ(m->subclass, sub) << lith;
  }
}

TEST(Lithology, TablesAreWellFormed) {
  for (auto lang : {Language::English, Language::Chinese}) {
    const auto& t = default_lithology_table(lang);
    std::map<std::string, std::string> cls_of;
    for (const auto& r : t.rows()) {
      auto [it, fresh] = cls_of.emplace(ascii_lower(r.lithology), r.cls);
      EXPECT_TRUE(fresh || it->second == r.cls);
    }
    EXPECT_EQ(LithologyTable::from_json(t.to_json()).rows(), t.rows());
  }
  EXPECT_THROW(LithologyTable(Language::English, {{"A", "x", "rock"}, {"B", "y", "rock"}}), DefinitionError);
}

// ---------------------------------------------------------------------------
// Backends

TEST(Backend, ScriptedQueueAndDeterminism) {
  ScriptedBackend b;
  b.enqueue("first").enqueue("second");
  CompletionRequest req;
  req.instruction = "hello";
  EXPECT_EQ(b.complete(req), "first");
  EXPECT_EQ(b.complete(req), "second");
  EXPECT_THROW(b.complete(req), BackendError);

  auto s = ScriptedBackend::from_json(json::parse(R"({"rules":[{"match":"hel+o","reply":"R"}],"default":"D"})"));
  EXPECT_EQ(s->complete(req), "R");
  EXPECT_EQ(s->complete(req), "R");
  req.instruction = "bye";
  EXPECT_EQ(s->complete(req), "D");
}

TEST(Backend, NullFails) {
  NullBackend b;
  EXPECT_THROW(b.complete({}), BackendError);
  EXPECT_FALSE(b.telemetry().snapshot().front().ok);
}

TEST(Backend, RequestValidationAndRoundTrip) {
  CompletionRequest req;
  req.instruction = "describe";
  req.temperature = 0.25;
  req.seed = 7;
  req.max_tokens = 100;
  req.json_mode = false;
  req.hints = {{"purpose", "qa"}};
  Image img(3, 2, {1, 2, 3});
  req.images.push_back({std::make_shared<const Image>(img), "legend", 0.5});
  EXPECT_EQ(deserialize_request(serialize_request(req)), req);

  CompletionRequest d;
  EXPECT_EQ(d.temperature, 0.0);
  EXPECT_EQ(d.seed, 42);
  EXPECT_EQ(d.max_tokens, 2048);
  EXPECT_EQ(d.system, "You are an expert in geology and cartography with a focus on geologic map.");
  d.max_tokens = 0;
  EXPECT_THROW(validate_request(d), DefinitionError);
  d.max_tokens = 1;
  d.temperature = -1;
  EXPECT_THROW(validate_request(d), DefinitionError);
}

TEST(Backend, ThrottleCapsInFlight) {
  struct Slow final : Backend {
    std::atomic<int> now{0}, peak{0};
    std::string complete(const CompletionRequest&) override {
      const int n = ++now;
      int p = peak.load();
      while (n > p && !peak.compare_exchange_weak(p, n)) {}
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --now;
      return "ok";
    }
    BackendKind kind() const override { return BackendKind::scripted_mock; }
  };
  auto slow = std::make_shared<Slow>();
  ThrottledBackend t(slow, 2);
  parallel_for(24, 8, [&](std::size_t) { t.complete({}); });
  EXPECT_LE(slow->peak.load(), 2);
}

// ---------------------------------------------------------------------------
// Reply parsing

TEST(ParseResponse, StrictPath) {
  const auto p = parse_response(R"({"reason":"r","answer":"B"})", AnswerShape::choice_label);
  EXPECT_EQ(std::get<ChoiceLabel>(p.answer).label, "B");
  EXPECT_EQ(p.reason, "r");
  EXPECT_EQ(p.path, ParsePath::strict);
  EXPECT_FALSE(p.lenient);
}

TEST(ParseResponse, FencedBbox) {
  const auto p = parse_response("```json\n{\"answer\":\"[10, 20, 300, 400]\", \"reason\":\"r\"}\n```", AnswerShape::bbox);
  EXPECT_EQ(std::get<BBox>(p.answer), (BBox{10, 20, 300, 400}));
  EXPECT_EQ(p.path, ParsePath::fenced);
}

TEST(ParseResponse, FallbackChain) {
  EXPECT_EQ(parse_response("Sure! {\"answer\": \"C\"} hope that helps", AnswerShape::choice_label).path,
            ParsePath::brace_slice);
  const auto b = parse_response("The title sits at (12, 8) to (400, 60).", AnswerShape::bbox);
  EXPECT_EQ(b.path, ParsePath::bbox_regex);
  EXPECT_EQ(std::get<BBox>(b.answer), (BBox{12, 8, 400, 60}));
  const auto l = parse_response("The answer is (D).", AnswerShape::choice_label);
  EXPECT_EQ(l.path, ParsePath::letter);
  EXPECT_EQ(std::get<ChoiceLabel>(l.answer).label, "D");
  EXPECT_THROW(parse_response("no idea, sorry", AnswerShape::choice_label), ParseError);
  EXPECT_THROW(parse_response("no idea, sorry", AnswerShape::bbox), ParseError);
  EXPECT_EQ(parse_response("Cedar Ridge", AnswerShape::text, true).path, ParsePath::plain_text);
}

TEST(ParseResponse, StrictForEveryOracleShape) {
  const std::vector<AnswerValue> values = {ChoiceLabel{"A"}, TextAnswer{"1:24000"}, BBox{1, 2, 3, 4},
                                           NameSet{{"A b", "C"}}, LonLatRange{-82, -81.5, 35, 35.25},
                                           Essay{"long\ntext"}};
  for (const auto& v : values) {
    const json reply = {{"reason", "r"}, {"answer", oracle_answer_value(v)}};
    const auto p = parse_response(reply.dump(), shape_of(v));
    EXPECT_EQ(p.path, ParsePath::strict);
    EXPECT_EQ(p.answer, v);
  }
}

// ---------------------------------------------------------------------------
// Prompt rendering

TEST(Prompts, SinglePassRender) {
  EXPECT_EQ(prompts::render("a ${x} b ${y} ${z}", {{"x", "${y}"}, {"y", "2"}}), "a ${y} b 2 ${z}");
}

TEST(Prompts, JudgingPromptLines) {
  const auto p = prompts::answer_judging("Q?", "one", "two");
  EXPECT_NE(p.find("Answer1:\none\nAnswer2:\ntwo\n"), std::string::npos);
  EXPECT_NE(p.find("Only respond answer with A, B or C"), std::string::npos);
  EXPECT_TRUE(p.ends_with("Answer:"));
}
