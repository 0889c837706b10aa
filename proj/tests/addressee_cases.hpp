#pragma once

#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "stagebeat/scene.hpp"
#include "support.hpp"

// Fifty addressee situations: lines that name someone, lines aimed by
// facing alone, and lines that fall back to whoever is nearest.

namespace addressee {

using namespace stagebeat;

enum class Kind { kNamed, kFacing, kNearest };

struct Case {
  std::string label;
  Kind kind;
  SceneState scene;
  std::string speaker;
  std::string line;
  /// Hand-annotated answer where the table states one.
  std::optional<std::optional<std::string>> annotated;
};

inline bool word_at(const std::string& h, const std::string& n, std::size_t pos) {
  if (pos + n.size() > h.size()) return false;
  for (std::size_t i = 0; i < n.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(h[pos + i])) != std::tolower(static_cast<unsigned char>(n[i])))
      return false;
  bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(h[pos - 1]));
  bool right = pos + n.size() == h.size() || !std::isalnum(static_cast<unsigned char>(h[pos + n.size()]));
  return left && right;
}

/// Brute force: every offset for every name, then bearings by atan2, then
/// plain distance.
inline std::optional<std::string> oracle(const SceneState& s, const std::string& speaker_id, const std::string& line) {
  const Character* sp = s.find_character(speaker_id);
  std::optional<std::string> best;
  std::size_t best_pos = 0, best_len = 0;
  for (const auto& c : s.characters) {
    if (c.id == speaker_id) continue;
    std::vector<std::string> names{c.name};
    names.insert(names.end(), c.aliases.begin(), c.aliases.end());
    for (const auto& n : names) {
      for (std::size_t pos = 0; pos < line.size(); ++pos) {
        if (!word_at(line, n, pos)) continue;
        if (!best || pos < best_pos || (pos == best_pos && n.size() > best_len)) {
          best = c.id;
          best_pos = pos;
          best_len = n.size();
        }
        break;
      }
    }
  }
  if (best) return best;

  const double facing_deg = std::atan2(sp->facing.z, sp->facing.x) * 180.0 / kPi;
  auto dist = [&](const Character& c) {
    return std::hypot(c.position.x - sp->position.x, c.position.z - sp->position.z);
  };
  std::optional<std::string> faced;
  double faced_d = 0;
  for (const auto& c : s.characters) {
    if (c.id == speaker_id) continue;
    double d = dist(c);
    if (d < 1e-4) continue;
    double bearing = std::atan2(c.position.z - sp->position.z, c.position.x - sp->position.x) * 180.0 / kPi;
    double off = std::fabs(std::remainder(bearing - facing_deg, 360.0));
    if (off > 45.0 + 1e-7) continue;
    if (!faced || d < faced_d || (d == faced_d && c.id < *faced)) {
      faced = c.id;
      faced_d = d;
    }
  }
  if (faced) return faced;

  std::optional<std::string> nearest;
  double nd = 0;
  for (const auto& c : s.characters) {
    if (c.id == speaker_id) continue;
    double d = distance(c.position, sp->position);
    if (!nearest || d < nd || (d == nd && c.id < *nearest)) {
      nearest = c.id;
      nd = d;
    }
  }
  return nearest;
}

inline Vec3 heading(double deg) { return {std::cos(deg * kPi / 180.0), 0.0, std::sin(deg * kPi / 180.0)}; }

inline Vec3 at(Vec3 from, double deg, double r) {
  Vec3 h = heading(deg);
  return {from.x + h.x * r, 0.0, from.z + h.z * r};
}

inline std::vector<Case> cases() {
  using support::person;
  std::vector<Case> out;
  const SceneState rh = support::robinhood().scene;
  auto named = [&](std::string speaker, std::string line, std::optional<std::optional<std::string>> expect) {
    out.push_back({"named: " + line, Kind::kNamed, rh, std::move(speaker), std::move(line), expect});
  };
  using S = std::optional<std::string>;
  named("robin", "Give Mary her bread back. That's bull that you think that one loaf of bread is the tax for this king.",
        S("mary"));
  named("mary", "Please sir, they say you're Robin Hood! My family hasn't eaten in three days.", S("robin"));
  named("robin", "You know what, Lord Pemberton? You're such an evil man.", S("pemberton"));
  named("pemberton", "Look, I'm sorry to burst your bubble, Robin Hood, but that's not the way things work.", S("robin"));
  named("mary", "Lord Pemberton, I'm tired of you! Robin, run! I will kill him!", S("pemberton"));
  named("robin", "Mary and Pemberton, listen to me.", S("mary"));
  named("robin", "Pemberton and Mary, listen to me.", S("pemberton"));
  named("mary", "ROBIN! Over here, quickly.", S("robin"));
  named("mary", "Pemberton's gold belongs to the village.", S("pemberton"));
  named("robin", "Hey mary, catch.", S("mary"));
  named("pemberton", "Mary? Robin? Where are you hiding?", S("mary"));
  named("pemberton", "Mary, dear, desperation rarely leads to anything but folly.", S("mary"));
  named("mary", "Sir Robin, tell my lord Pemberton to leave.", S("robin"));
  named("pemberton", "So you are Robin Hood, the thief of Sherwood.", S("robin"));
  named("robin", "Well then, Lord Pemberton, shall we talk about the taxes?", S("pemberton"));
  // Names inside other words do not count; the speaker's own name does not
  // either. These fall through to the geometric rules.
  named("mary", "robinhood is not how you spell it", std::nullopt);
  named("robin", "Marys all over the county are hungry.", std::nullopt);
  named("robin", "They call me Robin Hood, and I stand here.", std::nullopt);

  // Same starting offset: the longer name is the better match.
  SceneState jo = support::stage({person("x", "Jo", {0, 0, 0}), person("y", "Jo Ann", {1, 0, 0}),
                                  person("z", "Zed", {-1, 0, 0}, {1, 0, 0})});
  out.push_back({"named: longest at same offset", Kind::kNamed, jo, "z", "Jo Ann, come here.", S("y")});
  out.push_back({"named: short name alone", Kind::kNamed, jo, "z", "Jo, come here.", S("x")});

  // Facing: one listener placed inside the cone, others around.
  support::Gen gen(2024);
  const std::vector<std::string> neutral{"Well, what now?", "I have been thinking.", "Come along.",
                                         "It is getting late.", "Did you hear that?"};
  for (int i = 0; i < 14; ++i) {
    Vec3 origin{gen.real(-0.5, 0.5), 0, gen.real(-0.5, 0.5)};
    double face = gen.real(-180, 180);
    std::vector<Character> cs{person("s", "Sam", origin, heading(face))};
    cs.push_back(person("t", "Tia", at(origin, face + gen.real(-40, 40), gen.real(0.5, 1.2))));
    cs.push_back(person("u", "Uma", at(origin, face + gen.real(60, 300), gen.real(0.3, 1.2))));
    if (gen.coin()) cs.push_back(person("v", "Val", at(origin, face + gen.real(-40, 40), gen.real(0.5, 1.2))));
    for (auto& c : cs) c.position = SceneState{}.stage_bounds.clamp(c.position);
    out.push_back({"facing #" + std::to_string(i), Kind::kFacing, support::stage(cs), "s", gen.pick(neutral), std::nullopt});
  }
  // Cone edge at 44.9 and 45.1 degrees; Uma is nearer but behind.
  for (double edge : {44.9, 45.1}) {
    std::vector<Character> cs{person("s", "Sam", {0, 0, 0}, heading(0)), person("t", "Tia", at({0, 0, 0}, edge, 1.0)),
                              person("u", "Uma", at({0, 0, 0}, 180, 0.8))};
    out.push_back({"facing edge " + std::to_string(edge), edge < 45 ? Kind::kFacing : Kind::kNearest,
                   support::stage(cs), "s", "Hm.", S(edge < 45 ? "t" : "u")});
  }

  // Nearest: everyone outside the cone.
  for (int i = 0; i < 13; ++i) {
    Vec3 origin{gen.real(-0.5, 0.5), 0, gen.real(-0.5, 0.5)};
    double face = gen.real(-180, 180);
    std::vector<Character> cs{person("s", "Sam", origin, heading(face))};
    int n = static_cast<int>(gen.integer(1, 3));
    const char* ids[] = {"t", "u", "v"};
    const char* names[] = {"Tia", "Uma", "Val"};
    for (int k = 0; k < n; ++k)
      cs.push_back(person(ids[k], names[k], at(origin, face + gen.real(55, 305), gen.real(0.3, 1.4))));
    for (auto& c : cs) c.position = SceneState{}.stage_bounds.clamp(c.position);
    out.push_back({"nearest #" + std::to_string(i), Kind::kNearest, support::stage(cs), "s", gen.pick(neutral), std::nullopt});
  }
  out.push_back({"alone on stage", Kind::kNearest, support::stage({person("s", "Sam", {0, 0, 0})}), "s", "Hello?",
                 S(std::nullopt)});
  return out;
}

}  // namespace addressee
