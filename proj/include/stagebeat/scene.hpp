#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stagebeat/errors.hpp"
#include "stagebeat/events.hpp"
#include "stagebeat/geometry.hpp"

namespace stagebeat {

enum class CharacterState { kIdle, kTalking, kMoving, kHeldByUser };

inline std::string_view to_string(CharacterState s) {
  switch (s) {
    case CharacterState::kIdle: return "Idle";
    case CharacterState::kTalking: return "Talking";
    case CharacterState::kMoving: return "Moving";
    case CharacterState::kHeldByUser: return "HeldByUser";
  }
  return "?";
}

struct Character {
  std::string id;
  std::string name;
  /// Extra names the character answers to ("Robin" for "Robin Hood").
  std::vector<std::string> aliases;
  Vec3 position;
  Vec3 facing{1.0, 0.0, 0.0};
  std::optional<std::string> held_prop;
  CharacterState state = CharacterState::kIdle;
  std::string role_config_ref;
  friend bool operator==(const Character&, const Character&) = default;
};

struct Attachment {
  std::string character;
  Hand hand = Hand::kRight;
  friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct Prop {
  std::string id;
  std::string name;
  std::vector<std::string> aliases;
  std::vector<std::string> tags;
  Vec3 position;
  std::optional<Attachment> attached_to;

  bool has_tag(std::string_view tag) const {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
  }
  friend bool operator==(const Prop&, const Prop&) = default;
};

struct Zone {
  std::string id;
  std::string tag;
  Vec3 center;
  Vec3 half_extents;

  bool contains(Vec3 p) const {
    return Box{center - half_extents, center + half_extents}.contains(p);
  }
  friend bool operator==(const Zone&, const Zone&) = default;
};

struct SceneState {
  std::string scene_id;
  std::vector<Character> characters;
  std::vector<Prop> props;
  std::vector<Zone> zones;
  Box stage_bounds{{-2.0, 0.0, -2.0}, {2.0, 1.0, 2.0}};
  std::string environment_label;
  Millis clock = 0;

  const Character* find_character(std::string_view id) const {
    for (const auto& c : characters)
      if (c.id == id) return &c;
    return nullptr;
  }
  Character* find_character(std::string_view id) {
    return const_cast<Character*>(std::as_const(*this).find_character(id));
  }
  const Prop* find_prop(std::string_view id) const {
    for (const auto& p : props)
      if (p.id == id) return &p;
    return nullptr;
  }
  Prop* find_prop(std::string_view id) {
    return const_cast<Prop*>(std::as_const(*this).find_prop(id));
  }
  const Character& character(std::string_view id) const {
    if (const auto* c = find_character(id)) return *c;
    throw Error(ErrorCode::kUnknownCharacter, std::string(id));
  }
  const Prop& prop(std::string_view id) const {
    if (const auto* p = find_prop(id)) return *p;
    throw Error(ErrorCode::kUnknownProp, std::string(id));
  }
  /// The single character currently held by the author, if any.
  const Character* held_character() const {
    for (const auto& c : characters)
      if (c.state == CharacterState::kHeldByUser) return &c;
    return nullptr;
  }
  friend bool operator==(const SceneState&, const SceneState&) = default;
};

enum class TaskMode { kGoalDriven, kOpenEnded };

struct CharacterRole {
  std::string ref;
  std::string role;
  std::string motivation;
  std::vector<std::string> traits;
  std::string relationships;
  friend bool operator==(const CharacterRole&, const CharacterRole&) = default;
};

struct StoryRoleConfiguration {
  std::string scene_id;
  std::string location;
  std::string time;
  TaskMode task_mode = TaskMode::kOpenEnded;
  std::string goal;
  std::vector<CharacterRole> roles;

  const CharacterRole* find(std::string_view ref) const {
    for (const auto& r : roles)
      if (r.ref == ref) return &r;
    return nullptr;
  }
  friend bool operator==(const StoryRoleConfiguration&, const StoryRoleConfiguration&) = default;
};

struct SceneParams {
  double attach_radius_m = 0.15;
  double facing_half_angle_deg = 45.0;
  double hand_lateral_m = 0.2;
  double hand_forward_m = 0.1;
};

/// Result of a scene mutation: the new scene and the event that records it.
struct Applied {
  SceneState scene;
  InteractionEvent event;
};

namespace detail {

inline constexpr double kFacingEpsilon = 1e-4;

inline void advance_clock(SceneState& s, Millis t) {
  if (t < s.clock) {
    throw Error(ErrorCode::kNonMonotonicTimestamp,
                "t=" + std::to_string(t) + " precedes scene clock " + std::to_string(s.clock));
  }
  s.clock = t;
}

inline Character& mutable_character(SceneState& s, std::string_view id) {
  if (auto* c = s.find_character(id)) return *c;
  throw Error(ErrorCode::kUnknownCharacter, std::string(id));
}

/// Unit horizontal direction of `v`, or nullopt when it is too short to
/// define a heading.
inline std::optional<Vec3> heading_of(Vec3 v) {
  Vec3 h = v.horizontal();
  double n = h.norm();
  if (n <= kFacingEpsilon) return std::nullopt;
  return h * (1.0 / n);
}

}  // namespace detail

inline Vec3 hand_zone_position(const SceneState& scene, const Character& c, Hand hand,
                               const SceneParams& params = {}) {
  Vec3 up{0.0, 1.0, 0.0};
  Vec3 right = c.facing.cross(up);
  double side = hand == Hand::kRight ? params.hand_lateral_m : -params.hand_lateral_m;
  Vec3 p = c.position + right * side + c.facing * params.hand_forward_m;
  return scene.stage_bounds.clamp(p);
}

/// Pins every attached prop to its host hand. Called after each mutation.
inline void sync_attachments(SceneState& scene, const SceneParams& params = {}) {
  for (auto& prop : scene.props) {
    if (!prop.attached_to) continue;
    const Character& host = scene.character(prop.attached_to->character);
    prop.position = hand_zone_position(scene, host, prop.attached_to->hand, params);
  }
}

inline Applied grab_character(const SceneState& scene, std::string_view character_id, Millis t) {
  SceneState next = scene;
  Character& c = detail::mutable_character(next, character_id);
  if (const Character* held = scene.held_character()) {
    throw Error(ErrorCode::kAlreadyHeld, held->id);
  }
  detail::advance_clock(next, t);
  c.state = CharacterState::kHeldByUser;  // cancels any in-flight movement
  InteractionEvent ev{0, t, EventKind::kCharacterGrab, c.id, NoPayload{}};
  return {std::move(next), std::move(ev)};
}

inline Applied release_character(const SceneState& scene, std::string_view character_id,
                                 Millis t) {
  SceneState next = scene;
  Character& c = detail::mutable_character(next, character_id);
  if (c.state != CharacterState::kHeldByUser) throw Error(ErrorCode::kNotHeld, c.id);
  detail::advance_clock(next, t);
  c.state = CharacterState::kIdle;
  InteractionEvent ev{0, t, EventKind::kCharacterRelease, c.id, NoPayload{}};
  return {std::move(next), std::move(ev)};
}

inline Applied move_character(const SceneState& scene, std::string_view character_id,
                              Vec3 target, Millis t, const SceneParams& params = {}) {
  SceneState next = scene;
  Character& c = detail::mutable_character(next, character_id);
  if (c.state == CharacterState::kHeldByUser) {
    throw Error(ErrorCode::kHeldCharacterCannotMove, c.id);
  }
  if (!target.finite()) throw Error(ErrorCode::kInvalidArgument, "non-finite move target");
  detail::advance_clock(next, t);
  Vec3 from = c.position;
  Vec3 to = next.stage_bounds.clamp(target);
  if (auto heading = detail::heading_of(to - from)) c.facing = *heading;
  c.position = to;
  c.state = CharacterState::kIdle;  // locomotion completes within the step
  sync_attachments(next, params);
  InteractionEvent ev{0, t, EventKind::kCharacterMovement, c.id, MovementPayload{from, to}};
  return {std::move(next), std::move(ev)};
}

inline Applied attach_prop(const SceneState& scene, std::string_view prop_id,
                           std::string_view character_id, Hand hand, Millis t,
                           const SceneParams& params = {}) {
  SceneState next = scene;
  Prop* prop = next.find_prop(prop_id);
  if (!prop) throw Error(ErrorCode::kUnknownProp, std::string(prop_id));
  Character& c = detail::mutable_character(next, character_id);
  if (prop->attached_to) throw Error(ErrorCode::kPropAlreadyAttached, prop->id);
  Vec3 hand_pos = hand_zone_position(next, c, hand, params);
  double d = distance(prop->position, hand_pos);
  if (d >= params.attach_radius_m) {
    throw Error(ErrorCode::kOutOfRange, std::to_string(d));
  }
  detail::advance_clock(next, t);
  prop->attached_to = Attachment{c.id, hand};
  prop->position = hand_pos;
  c.held_prop = prop->id;
  InteractionEvent ev{0, t, EventKind::kCharacterObjectGrab, c.id,
                      ObjectGrabPayload{prop->id, hand}};
  return {std::move(next), std::move(ev)};
}

/// Turns `character_id` toward `toward_id` (AI speakers face whoever they
/// address). Leaves facing alone when the two coincide.
inline SceneState orient_toward(const SceneState& scene, std::string_view character_id,
                                std::string_view toward_id, const SceneParams& params = {}) {
  SceneState next = scene;
  Character& c = detail::mutable_character(next, character_id);
  const Character& other = scene.character(toward_id);
  if (auto heading = detail::heading_of(other.position - c.position)) c.facing = *heading;
  sync_attachments(next, params);
  return next;
}

/// Nearest character inside the speaker's facing cone, or nullopt when the
/// cone is empty. Bearings are measured on the stage plane.
inline std::optional<std::string> faced_character(const SceneState& scene,
                                                  std::string_view speaker_id,
                                                  const SceneParams& params = {}) {
  const Character& speaker = scene.character(speaker_id);
  const double cos_half = std::cos(params.facing_half_angle_deg * kPi / 180.0);
  std::optional<std::string> best;
  double best_d = 0.0;
  for (const auto& other : scene.characters) {
    if (other.id == speaker.id) continue;
    Vec3 v = (other.position - speaker.position).horizontal();
    double d = v.norm();
    if (d <= detail::kFacingEpsilon) continue;
    double cos_angle = v.dot(speaker.facing.horizontal()) / d;
    if (cos_angle + 1e-12 < cos_half) continue;
    if (!best || d < best_d || (d == best_d && other.id < *best)) {
      best = other.id;
      best_d = d;
    }
  }
  return best;
}

/// Nearest other character, ties by id.
inline std::optional<std::string> nearest_character(const SceneState& scene,
                                                    std::string_view speaker_id) {
  const Character& speaker = scene.character(speaker_id);
  std::optional<std::string> best;
  double best_d = 0.0;
  for (const auto& other : scene.characters) {
    if (other.id == speaker.id) continue;
    double d = distance(other.position, speaker.position);
    if (!best || d < best_d || (d == best_d && other.id < *best)) {
      best = other.id;
      best_d = d;
    }
  }
  return best;
}

inline std::vector<std::string> zone_membership(const SceneState& scene, Vec3 point) {
  std::vector<std::string> ids;
  for (const auto& z : scene.zones)
    if (z.contains(point)) ids.push_back(z.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Returns the first broken scene invariant, or an empty string.
inline std::string check_invariants(const SceneState& scene, const SceneParams& params = {}) {
  int held = 0;
  for (const auto& c : scene.characters) {
    if (!scene.stage_bounds.contains(c.position)) return "character out of bounds: " + c.id;
    if (std::abs(c.facing.norm() - 1.0) > 1e-6) return "facing not unit: " + c.id;
    if (c.state == CharacterState::kHeldByUser) ++held;
    if (c.held_prop && !scene.find_prop(*c.held_prop)) return "dangling held_prop: " + c.id;
  }
  if (held > 1) return "more than one held character";
  for (const auto& p : scene.props) {
    if (!scene.stage_bounds.contains(p.position)) return "prop out of bounds: " + p.id;
    if (p.attached_to) {
      const Character* host = scene.find_character(p.attached_to->character);
      if (!host) return "dangling attachment: " + p.id;
      if (distance(p.position, hand_zone_position(scene, *host, p.attached_to->hand, params)) >
          1e-9)
        return "attached prop off hand: " + p.id;
    }
  }
  for (const auto& z : scene.zones) {
    if (z.half_extents.x <= 0 || z.half_extents.y <= 0 || z.half_extents.z <= 0)
      return "degenerate zone: " + z.id;
  }
  return {};
}

/// Re-applies a logged event to a scene. This is the single path both live
/// play and replay use to keep scene state a pure function of the log.
inline SceneState apply_event(const SceneState& scene, const InteractionEvent& ev,
                              const SceneParams& params = {}) {
  switch (ev.kind) {
    case EventKind::kCharacterGrab: return grab_character(scene, ev.actor, ev.t).scene;
    case EventKind::kCharacterRelease: return release_character(scene, ev.actor, ev.t).scene;
    case EventKind::kCharacterMovement:
      return move_character(scene, ev.actor, ev.movement().to, ev.t, params).scene;
    case EventKind::kCharacterObjectGrab:
      return attach_prop(scene, ev.object_grab().prop, ev.actor, ev.object_grab().hand, ev.t,
                         params)
          .scene;
    case EventKind::kUserSpeech: {
      const Character& c = scene.character(ev.actor);
      if (c.state != CharacterState::kHeldByUser) {
        throw Error(ErrorCode::kCharacterNotHeld, c.id);
      }
      SceneState next = scene;
      detail::advance_clock(next, ev.t);
      return next;
    }
    case EventKind::kAIReactiveSpeech:
    case EventKind::kAIProactiveSpeech: {
      SceneState next = scene;
      detail::advance_clock(next, ev.t);
      Character& c = detail::mutable_character(next, ev.actor);
      if (c.state != CharacterState::kHeldByUser) c.state = CharacterState::kTalking;
      const auto& addressee = ev.speech().addressee;
      if (addressee && next.find_character(*addressee)) {
        next = orient_toward(next, ev.actor, *addressee, params);
      }
      return next;
    }
  }
  return scene;
}

}  // namespace stagebeat
