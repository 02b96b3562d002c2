#pragma once

#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "geomap/error.hpp"
#include "geomap/model.hpp"

namespace geomap {

struct TaskTemplate {
  Task task = Task::sheet_name;
  /// Surface forms; placeholders ${component}, ${intention}, ${rock}, ${color},
  /// ${rank}, ${direction}, ${lon}, ${lat}.
  std::vector<std::string> phrasings;
  /// Grounding-by-intention only.
  std::vector<std::string> intentions;
  /// Optional sentence appended to every question of the task.
  std::string answer_format;
};

struct TemplateSet {
  std::vector<TaskTemplate> tasks;

  const TaskTemplate& at(Task t) const {
    for (const auto& tt : tasks)
      if (tt.task == t) return tt;
    throw LookupError(fmt::format("no template for task {}", to_string(t)));
  }
};

inline std::vector<std::string> validate_templates(const TemplateSet& s) {
  std::vector<std::string> out;
  std::map<Task, int> count;
  for (const auto& t : s.tasks) {
    ++count[t.task];
    if (t.phrasings.empty()) out.push_back(fmt::format("{}: empty phrasing pool", to_string(t.task)));
    if (is_by_intention(t.task) && t.intentions.empty())
      out.push_back(fmt::format("{}: empty intention pool", to_string(t.task)));
  }
  for (const auto& ti : kTasks) {
    const int n = count[ti.task];
    if (n != 1) out.push_back(fmt::format("{}: listed {} times", ti.name, n));
  }
  return out;
}

inline json templates_to_json(const TemplateSet& s) {
  json arr = json::array();
  for (const auto& t : s.tasks) {
    json j = {{"task", t.task}, {"ability", info(t.task).ability}, {"qtype", info(t.task).qtype},
              {"phrasings", t.phrasings}};
    if (!t.intentions.empty()) j["intentions"] = t.intentions;
    if (!t.answer_format.empty()) j["answer_format"] = t.answer_format;
    arr.push_back(j);
  }
  return json{{"tasks", arr}};
}

inline TemplateSet templates_from_json(const json& j) {
  TemplateSet s;
  for (const auto& e : j.at("tasks")) {
    TaskTemplate t;
    t.task = e.at("task").get<Task>();
    t.phrasings = e.at("phrasings").get<std::vector<std::string>>();
    t.intentions = e.value("intentions", std::vector<std::string>{});
    t.answer_format = e.value("answer_format", "");
    s.tasks.push_back(std::move(t));
  }
  const auto problems = validate_templates(s);
  if (!problems.empty()) throw ParseError(fmt::format("template file: {}", problems.front()));
  return s;
}

/// Built-in templates; data/templates.json carries the same content.
inline const TemplateSet& default_templates() {
  static const TemplateSet s = [] {
    const std::string kBox = "Answer with the bounding box as [x_min, y_min, x_max, y_max] in pixels.";
    const std::string kByName1 = "What is the location (bounding box) of the ${component} component on the geologic map?";
    const std::string kByName2 = "Where is the ${component} component located on the geologic map? Give its bounding box.";
    const std::string kByIntent1 = "What location (bounding box) of the geologic map should I focus on to ${intention}?";
    const std::string kByIntent2 = "Which region (bounding box) of the geologic map would help me ${intention}?";
    TemplateSet d;
    auto add = [&](Task t, std::vector<std::string> p, std::vector<std::string> intents = {},
                   std::string fmt_hint = {}) {
      d.tasks.push_back({t, std::move(p), std::move(intents), std::move(fmt_hint)});
    };
    add(Task::sheet_name, {"What is the name of this map?", "Can you provide the name of this map?"});
    add(Task::scale, {"What is the scale of this map?", "What's the scale of this map?",
                      "Can you provide the scale of this map?"},
        {}, "Answer in the form 1:N.");
    add(Task::lonlat, {"What is the latitude and longitude ranges of this map?",
                       "Can you provide the longitude and latitude ranges covered by this map?"},
        {}, "Answer as {\"west\": W, \"east\": E, \"south\": S, \"north\": N} in decimal degrees.");
    add(Task::index_map, {"What are the neighboring areas of this region?",
                          "Which map sheets border this region?"},
        {}, "Answer with a list of names.");
    for (auto t : {Task::title_by_name, Task::scale_by_name, Task::legend_by_name, Task::main_map_by_name,
                   Task::index_map_by_name, Task::cross_section_by_name, Task::stratigraphic_column_by_name})
      add(t, {kByName1, kByName2}, {}, kBox);
    add(Task::title_by_intention, {kByIntent1, kByIntent2}, {"categorize, archive, and retrieve the geologic map"}, kBox);
    add(Task::scale_by_intention, {kByIntent1, kByIntent2}, {"measure distances and understand the terrain scale"}, kBox);
    add(Task::legend_by_intention, {kByIntent1, kByIntent2},
        {"identify different geologic units and phenomena through the markings"}, kBox);
    add(Task::main_map_by_intention, {kByIntent1, kByIntent2},
        {"identify the distribution of specific geologic resources"}, kBox);
    add(Task::index_map_by_intention, {kByIntent1, kByIntent2},
        {"identify the names of adjacent geologic map sheets in different directions"}, kBox);
    add(Task::cross_section_by_intention, {kByIntent1, kByIntent2},
        {"understand geologic structures from a three-dimensional perspective"}, kBox);
    add(Task::stratigraphic_column_by_intention, {kByIntent1, kByIntent2},
        {"understand the deposition or formation time of different strata to help determine their age"}, kBox);
    add(Task::color_by_rock, {"In this geologic map, what legend color is used to represent the '${rock}' rock name?",
                              "Which legend color represents the rock '${rock}' in this geologic map?"});
    add(Task::rock_by_color, {"In this geologic map, what is the rock name whose legend color is closest to ${color}?",
                              "Which rock name has the legend color nearest to ${color} in this geologic map?"});
    add(Task::area_comparison, {"Regarding the rock name in main map, which one ranks ${rank} in area among 4 choices?",
                                "Among the 4 rock names below, which one ranks ${rank} by area in the main map?"});
    add(Task::fault_existence,
        {"If the area represented by the geologic map is equally divided into a 3x3 grid, is there a fault in the "
         "grid located in the ${direction} direction?",
         "Dividing the mapped area into an equal 3x3 grid, does the ${direction} cell contain a fault?"});
    add(Task::lithology_composition, {"In this geologic map, which type of primary lithology has the largest proportion?",
                                      "Which primary lithology type covers the largest share of this geologic map?"});
    add(Task::lonlat_localization,
        {"Can you infer the most likely title of the map in which (longitude:${lon}, latitude:${lat}) is located?",
         "Which map title most likely covers the point (longitude:${lon}, latitude:${lat})?"});
    add(Task::earthquake_risk,
        {"Based on this geologic map, please analyze the seismic risk in this area from possibility and societal impact?",
         "Using this geologic map, assess the earthquake risk of this area in terms of likelihood and impact on society."});
    return d;
  }();
  return s;
}

}  // namespace geomap
