#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/backend.hpp"
#include "stagebeat/errors.hpp"
#include "stagebeat/interaction_log.hpp"
#include "stagebeat/scene.hpp"

namespace stagebeat {

/// A scripted line spoken before play starts.
struct ScriptLine {
  std::string speaker;
  std::string text;
  friend bool operator==(const ScriptLine&, const ScriptLine&) = default;
};

/// Everything a session starts from: the stage, the cast's roles, any
/// scripted preamble and the reply table for the offline backend.
struct SceneFixture {
  std::string fixture_id;
  std::string title;
  SceneState scene;
  StoryRoleConfiguration roles;
  std::vector<ScriptLine> preamble;
  BackendSeed seed;
};

namespace scene_json {

using nlohmann::json;
using json_detail::only_keys;
using json_detail::require;
using json_detail::require_string;
using json_detail::violation;

inline std::vector<std::string> strings(const json& obj, const std::string& path, const char* key) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (!it->is_array()) violation(path + "/" + key, "expected array");
  for (std::size_t i = 0; i < it->size(); ++i) {
    if (!(*it)[i].is_string()) violation(path + "/" + key + "/" + std::to_string(i), "expected string");
    out.push_back((*it)[i].get<std::string>());
  }
  return out;
}

inline const json& array_at(const json& obj, const std::string& path, const char* key) {
  const json& v = require(obj, path, key);
  if (!v.is_array()) violation(path + "/" + key, "expected array");
  return v;
}

inline json seed_to_json(const BackendSeed& s) {
  json summaries = json::array();
  for (const auto& r : s.summaries) summaries.push_back({{"all", r.all}, {"any", r.any}, {"text", r.text}});
  json replies = json::object();
  for (const auto& [k, v] : s.replies) replies[k] = v;
  return {{"replies", replies}, {"summaries", summaries}};
}

inline BackendSeed seed_from_json(const json& j, const std::string& path) {
  only_keys(j, path, {"replies", "summaries"});
  BackendSeed s;
  if (auto it = j.find("replies"); it != j.end()) {
    if (!it->is_object()) violation(path + "/replies", "expected object");
    for (auto r = it->begin(); r != it->end(); ++r)
      s.replies[r.key()] = strings(*it, path + "/replies", r.key().c_str());
  }
  if (auto it = j.find("summaries"); it != j.end()) {
    if (!it->is_array()) violation(path + "/summaries", "expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string p = path + "/summaries/" + std::to_string(i);
      const json& r = (*it)[i];
      only_keys(r, p, {"all", "any", "text"});
      s.summaries.push_back({strings(r, p, "all"), strings(r, p, "any"), require_string(r, p, "text")});
    }
  }
  return s;
}

}  // namespace scene_json

inline nlohmann::json fixture_to_json(const SceneFixture& f) {
  using nlohmann::json;
  const SceneState& s = f.scene;
  json chars = json::array(), props = json::array(), zones = json::array(), roles = json::array(),
       preamble = json::array();
  for (const auto& c : s.characters)
    chars.push_back({{"id", c.id},
                     {"name", c.name},
                     {"aliases", c.aliases},
                     {"position", vec3_to_json(c.position)},
                     {"facing", vec3_to_json(c.facing)},
                     {"role_config_ref", c.role_config_ref}});
  for (const auto& p : s.props)
    props.push_back({{"id", p.id},
                     {"name", p.name},
                     {"aliases", p.aliases},
                     {"tags", p.tags},
                     {"position", vec3_to_json(p.position)}});
  for (const auto& z : s.zones)
    zones.push_back({{"id", z.id},
                     {"tag", z.tag},
                     {"center", vec3_to_json(z.center)},
                     {"half_extents", vec3_to_json(z.half_extents)}});
  for (const auto& r : f.roles.roles)
    roles.push_back({{"ref", r.ref},
                     {"role", r.role},
                     {"motivation", r.motivation},
                     {"traits", r.traits},
                     {"relationships", r.relationships}});
  for (const auto& l : f.preamble) preamble.push_back({{"speaker", l.speaker}, {"text", l.text}});
  return {{"fixture_id", f.fixture_id},
          {"title", f.title},
          {"environment_label", s.environment_label},
          {"stage_bounds", {{"min", vec3_to_json(s.stage_bounds.min)}, {"max", vec3_to_json(s.stage_bounds.max)}}},
          {"characters", chars},
          {"props", props},
          {"zones", zones},
          {"roles",
           {{"scene_id", f.roles.scene_id},
            {"location", f.roles.location},
            {"time", f.roles.time},
            {"task_mode", f.roles.task_mode == TaskMode::kGoalDriven ? "GoalDriven" : "OpenEnded"},
            {"goal", f.roles.goal},
            {"characters", roles}}},
          {"preamble_lines", preamble},
          {"backend_seed", scene_json::seed_to_json(f.seed)}};
}

/// Parses a scene fixture. Errors name the offending JSON path, prefixed by
/// `base` (so "/scene/characters/2/position" inside a session document).
inline SceneFixture fixture_from_json(const nlohmann::json& j, const std::string& base = "") {
  using namespace scene_json;
  only_keys(j, base, {"fixture_id", "title", "environment_label", "stage_bounds", "characters",
                      "props", "zones", "roles", "preamble_lines", "backend_seed"});
  SceneFixture f;
  f.fixture_id = require_string(j, base, "fixture_id");
  f.title = j.contains("title") ? require_string(j, base, "title") : f.fixture_id;
  SceneState& s = f.scene;
  s.scene_id = f.fixture_id;
  s.environment_label = require_string(j, base, "environment_label");
  if (auto it = j.find("stage_bounds"); it != j.end()) {
    only_keys(*it, base + "/stage_bounds", {"min", "max"});
    s.stage_bounds.min = vec3_from_json(require(*it, base + "/stage_bounds", "min"), base + "/stage_bounds/min");
    s.stage_bounds.max = vec3_from_json(require(*it, base + "/stage_bounds", "max"), base + "/stage_bounds/max");
  }
  const json& chars = array_at(j, base, "characters");
  for (std::size_t i = 0; i < chars.size(); ++i) {
    const std::string p = base + "/characters/" + std::to_string(i);
    only_keys(chars[i], p, {"id", "name", "aliases", "position", "facing", "role_config_ref"});
    Character c;
    c.id = require_string(chars[i], p, "id");
    c.name = require_string(chars[i], p, "name");
    c.aliases = strings(chars[i], p, "aliases");
    c.position = vec3_from_json(require(chars[i], p, "position"), p + "/position");
    if (chars[i].contains("facing")) {
      Vec3 fc = vec3_from_json(chars[i]["facing"], p + "/facing").horizontal();
      if (fc.norm() < 1e-9) violation(p + "/facing", "zero vector");
      c.facing = fc * (1.0 / fc.norm());
    }
    c.role_config_ref = chars[i].contains("role_config_ref")
                            ? require_string(chars[i], p, "role_config_ref")
                            : c.id;
    if (s.find_character(c.id)) violation(p + "/id", "duplicate id");
    s.characters.push_back(std::move(c));
  }
  if (j.contains("props")) {
    const json& props = array_at(j, base, "props");
    for (std::size_t i = 0; i < props.size(); ++i) {
      const std::string p = base + "/props/" + std::to_string(i);
      only_keys(props[i], p, {"id", "name", "aliases", "tags", "position"});
      Prop pr;
      pr.id = require_string(props[i], p, "id");
      pr.name = require_string(props[i], p, "name");
      pr.aliases = strings(props[i], p, "aliases");
      pr.tags = strings(props[i], p, "tags");
      pr.position = vec3_from_json(require(props[i], p, "position"), p + "/position");
      if (s.find_prop(pr.id)) violation(p + "/id", "duplicate id");
      s.props.push_back(std::move(pr));
    }
  }
  if (j.contains("zones")) {
    const json& zones = array_at(j, base, "zones");
    for (std::size_t i = 0; i < zones.size(); ++i) {
      const std::string p = base + "/zones/" + std::to_string(i);
      only_keys(zones[i], p, {"id", "tag", "center", "half_extents"});
      Zone z{require_string(zones[i], p, "id"), require_string(zones[i], p, "tag"),
             vec3_from_json(require(zones[i], p, "center"), p + "/center"),
             vec3_from_json(require(zones[i], p, "half_extents"), p + "/half_extents")};
      s.zones.push_back(std::move(z));
    }
  }
  const json& roles = require(j, base, "roles");
  const std::string rp = base + "/roles";
  only_keys(roles, rp, {"scene_id", "location", "time", "task_mode", "goal", "characters"});
  f.roles.scene_id = roles.contains("scene_id") ? require_string(roles, rp, "scene_id") : f.fixture_id;
  f.roles.location = require_string(roles, rp, "location");
  f.roles.time = require_string(roles, rp, "time");
  std::string mode = roles.contains("task_mode") ? require_string(roles, rp, "task_mode") : "OpenEnded";
  if (mode == "GoalDriven") f.roles.task_mode = TaskMode::kGoalDriven;
  else if (mode != "OpenEnded") violation(rp + "/task_mode", "expected GoalDriven or OpenEnded");
  if (roles.contains("goal")) f.roles.goal = require_string(roles, rp, "goal");
  const json& rc = array_at(roles, rp, "characters");
  for (std::size_t i = 0; i < rc.size(); ++i) {
    const std::string p = rp + "/characters/" + std::to_string(i);
    only_keys(rc[i], p, {"ref", "role", "motivation", "traits", "relationships"});
    f.roles.roles.push_back({require_string(rc[i], p, "ref"), require_string(rc[i], p, "role"),
                             require_string(rc[i], p, "motivation"), strings(rc[i], p, "traits"),
                             rc[i].contains("relationships") ? require_string(rc[i], p, "relationships")
                                                             : std::string()});
  }
  if (j.contains("preamble_lines")) {
    const json& pl = array_at(j, base, "preamble_lines");
    for (std::size_t i = 0; i < pl.size(); ++i) {
      const std::string p = base + "/preamble_lines/" + std::to_string(i);
      only_keys(pl[i], p, {"speaker", "text"});
      ScriptLine l{require_string(pl[i], p, "speaker"), require_string(pl[i], p, "text")};
      if (!s.find_character(l.speaker)) violation(p + "/speaker", "unknown character");
      f.preamble.push_back(std::move(l));
    }
  }
  if (j.contains("backend_seed")) f.seed = seed_from_json(j["backend_seed"], base + "/backend_seed");

  for (std::size_t i = 0; i < s.characters.size(); ++i)
    if (!f.roles.find(s.characters[i].role_config_ref))
      violation(base + "/characters/" + std::to_string(i) + "/role_config_ref", "unresolved");
  if (std::string broken = check_invariants(s); !broken.empty()) violation(base, broken);
  return f;
}

/// Fixtures found as *.json in a directory, keyed by fixture_id.
class FixtureCatalog {
 public:
  FixtureCatalog() = default;

  static FixtureCatalog load_dir(const std::filesystem::path& dir) {
    FixtureCatalog cat;
    if (!std::filesystem::is_directory(dir))
      throw Error(ErrorCode::kInvalidArgument, "fixture directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      std::ifstream in(p);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kSchemaViolation, p.filename().string() + ": " + e.what());
      }
      cat.add(fixture_from_json(j));
    }
    return cat;
  }

  void add(SceneFixture f) { fixtures_[f.fixture_id] = std::move(f); }

  const SceneFixture& get(const std::string& id) const {
    auto it = fixtures_.find(id);
    if (it == fixtures_.end()) throw Error(ErrorCode::kUnknownFixture, id);
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : fixtures_) out.push_back(k);
    return out;
  }

  bool empty() const { return fixtures_.empty(); }

 private:
  std::map<std::string, SceneFixture> fixtures_;
};

}  // namespace stagebeat
