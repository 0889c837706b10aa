#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stagebeat/backend.hpp"
#include "stagebeat/config.hpp"
#include "stagebeat/features.hpp"
#include "stagebeat/interaction_log.hpp"
#include "stagebeat/prompt_templates.hpp"
#include "stagebeat/scene.hpp"

// Observers. Each turns an applied event (scene before/after plus the event)
// into IntentFeatures. Features leave here with feature_id 0; the session
// numbers them.

namespace stagebeat {

struct TrailSample {
  Millis t = 0;
  Vec3 position;
  friend bool operator==(const TrailSample&, const TrailSample&) = default;
};

/// Bounded history of recent positions for one entity, oldest first.
class MovementTrail {
 public:
  explicit MovementTrail(std::string entity = {}, std::size_t capacity = 32)
      : entity_(std::move(entity)), capacity_(std::max<std::size_t>(capacity, 1)) {}

  void push(Millis t, Vec3 p) {
    if (!samples_.empty() && t < samples_.back().t) {
      throw Error(ErrorCode::kNonMonotonicTimestamp, "trail sample out of order");
    }
    if (samples_.size() == capacity_) samples_.pop_front();
    samples_.push_back({t, p});
  }

  const std::string& entity() const { return entity_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return samples_.size(); }
  const std::deque<TrailSample>& samples() const { return samples_; }

  /// Path length over the retained samples.
  double path_length() const {
    double d = 0.0;
    for (std::size_t i = 1; i < samples_.size(); ++i)
      d += distance(samples_[i - 1].position, samples_[i].position);
    return d;
  }

 private:
  std::string entity_;
  std::size_t capacity_;
  std::deque<TrailSample> samples_;
};

struct CharacterArc {
  std::string character;
  std::string emotional_state;
  std::vector<std::string> goals;
  std::vector<std::string> unresolved_tensions;
  Millis last_updated = 0;
  friend bool operator==(const CharacterArc&, const CharacterArc&) = default;
};

namespace agent_detail {

inline IntentFeature make(Agent agent, std::string_view label, std::string actor,
                          std::optional<std::string> target, Vec3 where,
                          const InteractionEvent& ev, double confidence, double salience) {
  IntentFeature f;
  f.agent = agent;
  f.label = std::string(label);
  f.actor = std::move(actor);
  f.target = std::move(target);
  f.location = where;
  f.t = ev.t;
  f.confidence = confidence;
  f.salience = std::clamp(salience, 0.0, 1.0);
  f.source_event = ev.event_id;
  return f;
}

inline std::vector<std::string> set_minus(const std::vector<std::string>& a,
                                          const std::vector<std::string>& b) {
  std::vector<std::string> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// Character involved in a pair event: the event's actor when it is one of
/// the two, else the smaller id.
inline std::pair<std::string, std::string> oriented(const std::string& a, const std::string& b,
                                                    const std::string& mover) {
  if (b == mover) return {b, a};
  if (a == mover) return {a, b};
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace agent_detail

// --- environment -----------------------------------------------------------

/// Spatial observer: movement beyond the threshold, zone entry and exit,
/// proximity crossings and groupings.
class EnvironmentAgent {
 public:
  explicit EnvironmentAgent(const EngineConfig& cfg = {}) : cfg_(cfg) {}

  /// Environmental salience of a displacement; 0 at or below the threshold.
  static double movement_salience(double displacement, double threshold) {
    if (!(displacement > threshold)) return 0.0;
    return std::min(1.0, displacement / (2.0 * threshold));
  }

  std::vector<IntentFeature> observe(const SceneState& before, const SceneState& after,
                                     const InteractionEvent& ev) {
    using agent_detail::make;
    std::vector<IntentFeature> out;
    const double direct = confidence_of(ev.kind);
    const double inferred = confidence_of(Evidence::kInferredSpatial);
    const double r = cfg_.interaction_radius_m;

    // Movement and zones, characters first, then props, in scene order.
    auto track = [&](const std::string& id, Vec3 from, Vec3 to) {
      double d = distance(from, to);
      if (d > 0.0) trail(id).push(ev.t, to);
      if (double s = movement_salience(d, cfg_.movement_threshold_m); s > 0.0)
        out.push_back(make(Agent::kEnvironment, labels::kMovementTrail, id, std::nullopt, to, ev,
                           direct, s));
      auto zb = zone_membership(before, from), za = zone_membership(after, to);
      for (const auto& z : agent_detail::set_minus(zb, za))
        out.push_back(make(Agent::kEnvironment, labels::kZoneExit, id, z, to, ev, direct,
                           cfg_.zone_salience));
      for (const auto& z : agent_detail::set_minus(za, zb))
        out.push_back(make(Agent::kEnvironment, labels::kZoneEntry, id, z, to, ev, direct,
                           cfg_.zone_salience));
    };
    for (const auto& c : after.characters)
      if (const auto* b = before.find_character(c.id)) track(c.id, b->position, c.position);
    for (const auto& p : after.props)
      if (const auto* b = before.find_prop(p.id)) track(p.id, b->position, p.position);

    // Character-prop radius crossings.
    for (const auto& c : after.characters) {
      const Character* cb = before.find_character(c.id);
      if (!cb) continue;
      int near_before = 0, near_after = 0;
      for (const auto& p : after.props) {
        const Prop* pb = before.find_prop(p.id);
        if (!pb) continue;
        bool was = distance(cb->position, pb->position) <= r;
        bool is = distance(c.position, p.position) <= r;
        near_before += was;
        near_after += is;
        if (!was && is && !(p.attached_to && p.attached_to->character == c.id))
          out.push_back(make(Agent::kEnvironment, labels::kPropProximity, c.id, p.id, p.position,
                             ev, inferred, cfg_.proximity_salience));
      }
      if (near_before < 2 && near_after >= 2)
        out.push_back(make(Agent::kEnvironment, labels::kProximityGrouping, c.id, std::nullopt,
                           c.position, ev, inferred, cfg_.proximity_salience));
    }

    // Character-character crossings, each unordered pair once.
    for (std::size_t i = 0; i < after.characters.size(); ++i) {
      for (std::size_t j = i + 1; j < after.characters.size(); ++j) {
        const auto& a = after.characters[i];
        const auto& b = after.characters[j];
        const Character* ab = before.find_character(a.id);
        const Character* bb = before.find_character(b.id);
        if (!ab || !bb) continue;
        bool was = distance(ab->position, bb->position) <= r;
        bool is = distance(a.position, b.position) <= r;
        if (was || !is) continue;
        auto [actor, target] = agent_detail::oriented(a.id, b.id, ev.actor);
        const Vec3 where = after.character(actor).position;
        out.push_back(make(Agent::kEnvironment, labels::kCharacterProximity, actor, target, where,
                           ev, inferred, cfg_.proximity_salience));
      }
    }
    return out;
  }

  MovementTrail& trail(const std::string& id) {
    auto it = trails_.find(id);
    if (it == trails_.end()) it = trails_.emplace(id, MovementTrail(id, cfg_.trail_capacity)).first;
    return it->second;
  }
  const std::map<std::string, MovementTrail>& trails() const { return trails_; }

 private:
  EngineConfig cfg_;
  std::map<std::string, MovementTrail> trails_;
};

// --- social ------------------------------------------------------------------

/// Last novel interaction time per unordered entity pair.
class InteractionMemory {
 public:
  using Pair = std::pair<std::string, std::string>;

  static Pair key(const std::string& a, const std::string& b) {
    return a < b ? Pair{a, b} : Pair{b, a};
  }

  /// Novelty for an interaction of (a, b) at t. Records t when novel.
  double touch(const std::string& a, const std::string& b, Millis t, Millis cooldown,
               double novel, double repeat) {
    auto k = key(a, b);
    auto it = last_novel_.find(k);
    if (it == last_novel_.end() || t - it->second >= cooldown) {
      last_novel_[k] = t;
      return novel;
    }
    return repeat;
  }

  std::optional<Millis> last_novel(const std::string& a, const std::string& b) const {
    auto it = last_novel_.find(key(a, b));
    if (it == last_novel_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const InteractionMemory&) const = default;

 private:
  std::map<Pair, Millis> last_novel_;
};

/// Relational observer: encounters, conversation, prop handling.
class SocialAgent {
 public:
  explicit SocialAgent(const EngineConfig& cfg = {}) : cfg_(cfg) {}

  std::vector<IntentFeature> observe(const SceneState& before, const SceneState& after,
                                     const InteractionEvent& ev) {
    using agent_detail::make;
    std::vector<IntentFeature> out;
    const double r = cfg_.interaction_radius_m;
    const double inferred = confidence_of(Evidence::kInferredSpatial);
    auto novelty = [&](const std::string& a, const std::string& b) {
      return memory_.touch(a, b, ev.t, cfg_.social_cooldown_ms, cfg_.social_novel,
                           cfg_.social_repeat);
    };

    if (ev.kind == EventKind::kCharacterMovement) {
      const Character& mover = after.character(ev.actor);
      const Character& mover_before = before.character(ev.actor);
      for (const auto& other : after.characters) {
        if (other.id == mover.id) continue;
        const Character* ob = before.find_character(other.id);
        if (!ob) continue;
        bool was = distance(mover_before.position, ob->position) <= r;
        bool is = distance(mover.position, other.position) <= r;
        if (!was && is)
          out.push_back(make(Agent::kSocial, labels::kCharacterEncounter, mover.id, other.id,
                             mover.position, ev, inferred, novelty(mover.id, other.id)));
      }
      for (const auto& p : after.props) {
        if (p.attached_to && p.attached_to->character == mover.id) continue;
        const Prop* pb = before.find_prop(p.id);
        if (!pb) continue;
        bool was = distance(mover_before.position, pb->position) <= r;
        bool is = distance(mover.position, p.position) <= r;
        if (!was && is)
          out.push_back(make(Agent::kSocial, labels::kPropEncounter, mover.id, p.id, p.position,
                             ev, inferred, novelty(mover.id, p.id)));
      }
    } else if (is_speech(ev.kind)) {
      const auto& addressee = ev.speech().addressee;
      if (addressee && after.find_character(*addressee)) {
        out.push_back(make(Agent::kSocial, labels::kCharacterInteraction, ev.actor, *addressee,
                           after.character(ev.actor).position, ev, confidence_of(ev.kind),
                           novelty(ev.actor, *addressee)));
      }
    } else if (ev.kind == EventKind::kCharacterObjectGrab) {
      const auto& grab = ev.object_grab();
      const Prop& prop = after.prop(grab.prop);
      const Vec3 where = after.character(ev.actor).position;
      out.push_back(make(Agent::kSocial, labels::kPropHandling, ev.actor, prop.id, where, ev,
                         confidence_of(ev.kind), novelty(ev.actor, prop.id)));
      if (prop.has_tag("weapon")) {
        auto victim = faced_character(after, ev.actor);
        if (!victim) victim = nearest_character(after, ev.actor);
        if (victim)
          out.push_back(make(Agent::kSocial, labels::kRelationShift, ev.actor, *victim, where, ev,
                             inferred, novelty(ev.actor, *victim)));
      }
    }
    return out;
  }

  const InteractionMemory& memory() const { return memory_; }

 private:
  EngineConfig cfg_;
  InteractionMemory memory_;
};

// --- narrator ----------------------------------------------------------------

struct NarratorResult {
  std::vector<IntentFeature> features;
  CharacterArc arc;
};

/// Terms of the progression estimate, exposed for testing.
struct ProgressionTerms {
  int new_entities = 0;
  bool arc_shift = false;
  double overlap = 0.0;

  double value() const {
    double n = 0.4 * new_entities + 0.3 * (arc_shift ? 1.0 : 0.0) + 0.3 * (1.0 - overlap);
    return std::clamp(n, 0.1, 1.0);
  }
};

/// Dialogue observer. Tracks which entities the story has mentioned, each
/// speaker's emotional arc, and how much a new line repeats earlier ones.
class NarratorAgent {
 public:
  NarratorAgent() = default;

  /// Names an entity can be mentioned by.
  static std::vector<std::string> names_of(const SceneState& scene, const std::string& id) {
    std::vector<std::string> names;
    if (const auto* c = scene.find_character(id)) {
      names.push_back(c->name);
      names.insert(names.end(), c->aliases.begin(), c->aliases.end());
    } else if (const auto* p = scene.find_prop(id)) {
      names.push_back(p->name);
      names.insert(names.end(), p->aliases.begin(), p->aliases.end());
    }
    return names;
  }

  static bool mentions(const SceneState& scene, const std::string& id, std::string_view text) {
    for (const auto& n : names_of(scene, id))
      if (text::contains_whole_word(text, n)) return true;
    return false;
  }

  std::string build_prompt(const SceneState& scene, const StoryRoleConfiguration& roles,
                           const InteractionEvent& ev) const {
    const Character& speaker = scene.character(ev.actor);
    const CharacterRole* role = roles.find(speaker.role_config_ref);
    std::vector<std::string> recent;
    std::size_t from = history_.size() > 4 ? history_.size() - 4 : 0;
    for (std::size_t i = from; i < history_.size(); ++i) recent.push_back(history_[i]);
    return prompts::fill_template(
        prompts::kNarratorTemplate,
        {{"CharacterName", speaker.name},
         {"MostRecentUtterance", ev.speech().text},
         {"RecentDialogueHistory", recent.empty() ? "(none)" : text::join(recent, " / ")},
         {"NarrativeRole", role ? role->role : "unspecified"},
         {"CharacterMotivation", role ? role->motivation : "unspecified"},
         {"KeyTraits", role ? text::join(role->traits, ", ") : "unspecified"},
         {"Summary of tensions and alliances", role ? role->relationships : "unspecified"}});
  }

  /// Progression terms for `ev` against the current memory, without
  /// updating it. `emotion` is the analysed emotional state of the line.
  ProgressionTerms terms(const SceneState& scene, const InteractionEvent& ev,
                         const std::string& emotion) const {
    ProgressionTerms t;
    const std::string& line = ev.speech().text;
    t.new_entities = static_cast<int>(fresh_entities(scene, ev).size());
    auto it = arcs_.find(ev.actor);
    t.arc_shift = it == arcs_.end() || it->second.emotional_state != emotion;
    for (const auto& prior : lines_) t.overlap = std::max(t.overlap, text::ngram_similarity(line, prior));
    return t;
  }

  /// Observes a speech event. Throws Error(kBackendFailure) before touching
  /// any state when the analysis call fails.
  NarratorResult observe(const SceneState& scene, const StoryRoleConfiguration& roles,
                         const InteractionEvent& ev, GenerationBackend& backend) {
    if (!is_speech(ev.kind)) throw Error(ErrorCode::kInvalidArgument, "narrator needs speech");
    auto reply = backend.analyze(build_prompt(scene, roles, ev));
    std::string emotion = detail::line_value(reply, "EMOTIONAL STATE:").value_or("");
    if (emotion.empty()) emotion = emotion_of(ev.speech().text);
    std::string relationship = detail::line_value(reply, "RELATIONSHIP:").value_or("");

    ProgressionTerms t = terms(scene, ev, emotion);
    for (const auto& id : fresh_entities(scene, ev)) mentioned_.insert(id);

    const Character& speaker = scene.character(ev.actor);
    CharacterArc& arc = arcs_[ev.actor];
    if (arc.character.empty()) {
      arc.character = ev.actor;
      if (const auto* role = roles.find(speaker.role_config_ref); role && !role->motivation.empty())
        arc.goals.push_back(role->motivation);
    }
    arc.emotional_state = emotion;
    arc.last_updated = ev.t;
    const auto& addressee = ev.speech().addressee;
    if (addressee && relationship == "strained") {
      std::string tension = "at odds with " + *addressee;
      if (std::find(arc.unresolved_tensions.begin(), arc.unresolved_tensions.end(), tension) ==
          arc.unresolved_tensions.end())
        arc.unresolved_tensions.push_back(tension);
    }
    lines_.push_back(ev.speech().text);
    history_.push_back(speaker.name + ": " + ev.speech().text);

    IntentFeature f = agent_detail::make(Agent::kNarrator, labels::kCharacterSpeech, ev.actor,
                                         addressee, speaker.position, ev, confidence_of(ev.kind),
                                         t.value());
    return {{f}, arc};
  }

  const std::map<std::string, CharacterArc>& arcs() const { return arcs_; }
  const std::set<std::string>& mentioned() const { return mentioned_; }

 private:
  /// Entities this line brings into the story for the first time: anything
  /// named in the text plus the speaker and addressee themselves.
  std::vector<std::string> fresh_entities(const SceneState& scene,
                                          const InteractionEvent& ev) const {
    std::set<std::string> found;
    for (const auto& c : scene.characters)
      if (c.id != ev.actor && mentions(scene, c.id, ev.speech().text)) found.insert(c.id);
    for (const auto& p : scene.props)
      if (mentions(scene, p.id, ev.speech().text)) found.insert(p.id);
    found.insert(ev.actor);
    if (ev.speech().addressee) found.insert(*ev.speech().addressee);
    std::vector<std::string> out;
    for (const auto& id : found)
      if (!mentioned_.count(id)) out.push_back(id);
    return out;
  }

  std::set<std::string> mentioned_;
  std::map<std::string, CharacterArc> arcs_;
  std::vector<std::string> lines_;
  std::vector<std::string> history_;
};

// --- prompt builders for the spatial and social templates ------------------

inline std::string environment_prompt(const SceneState& scene, const IntentFeature& f) {
  std::vector<std::string> nearby;
  for (const auto& c : scene.characters)
    if (c.id != f.actor) nearby.push_back(c.name);
  return prompts::fill_template(
      prompts::kEnvironmentTemplate,
      {{"Character or Prop", f.actor},
       {"Movement/Placement Change", f.label},
       {"Closest Characters/Props", nearby.empty() ? "(none)" : text::join(nearby, ", ")},
       {"Zone or Feature Entered/Exposed", f.target.value_or("(none)")}});
}

inline std::string social_prompt(const SceneState& scene, const StoryRoleConfiguration& roles,
                                 const IntentFeature& f) {
  auto describe = [&](const std::string& id) -> std::string {
    const Character* c = scene.find_character(id);
    if (!c) return id;
    const CharacterRole* r = roles.find(c->role_config_ref);
    if (!r) return c->name;
    return r->role + ", " + r->motivation + ", " + text::join(r->traits, "/");
  };
  std::string out(prompts::kSocialTemplate);
  const std::string slot = "<Role, Motivation, Traits>";
  if (auto a = out.find(slot); a != std::string::npos) out.replace(a, slot.size(), describe(f.actor));
  if (auto b = out.find(slot); b != std::string::npos)
    out.replace(b, slot.size(), f.target ? describe(*f.target) : "(none)");
  return prompts::fill_template(out, {{"CharacterName", f.actor},
                                      {"OtherCharacter or Prop", f.target.value_or("(none)")},
                                      {"InteractionType", f.label}});
}

}  // namespace stagebeat
