#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/scene_document.hpp"
#include "stagebeat/session_manager.hpp"

namespace support {

using namespace stagebeat;

inline std::filesystem::path data_dir() { return STAGEBEAT_DATA_DIR; }

inline const FixtureCatalog& catalog() {
  static const FixtureCatalog c = FixtureCatalog::load_dir(data_dir() / "fixtures");
  return c;
}

inline const SceneFixture& robinhood() { return catalog().get("robinhood"); }

inline nlohmann::json robinhood_session() { return read_json_file(data_dir() / "robinhood_session.json"); }

inline Character person(std::string id, std::string name, Vec3 pos, Vec3 facing = {1, 0, 0}) {
  Character c;
  c.id = std::move(id);
  c.name = std::move(name);
  c.position = pos;
  c.facing = facing;
  c.role_config_ref = c.id;
  return c;
}

inline Prop thing(std::string id, std::string name, Vec3 pos, std::vector<std::string> tags = {}) {
  Prop p;
  p.id = std::move(id);
  p.name = std::move(name);
  p.position = pos;
  p.tags = std::move(tags);
  return p;
}

inline SceneState stage(std::vector<Character> cs, std::vector<Prop> ps = {}, std::vector<Zone> zs = {}) {
  SceneState s;
  s.scene_id = "bare";
  s.characters = std::move(cs);
  s.props = std::move(ps);
  s.zones = std::move(zs);
  s.environment_label = "bare stage";
  return s;
}

inline SceneFixture fixture_of(SceneState s) {
  SceneFixture f;
  f.fixture_id = s.scene_id;
  f.title = s.scene_id;
  f.roles.scene_id = s.scene_id;
  for (const auto& c : s.characters) f.roles.roles.push_back({c.id, "player", "win", {"plain"}, ""});
  f.scene = std::move(s);
  return f;
}

/// Seeded generator for property tests.
struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  long long integer(long long lo, long long hi) { return std::uniform_int_distribution<long long>(lo, hi)(rng); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng); }
  template <class T>
  T pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(integer(0, static_cast<long long>(v.size()) - 1))];
  }
  Vec3 floor_point(double r = 2.0) { return {real(-r, r), 0.0, real(-r, r)}; }
  std::mt19937_64 rng;
};

}  // namespace support
