#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "stagebeat/errors.hpp"
#include "stagebeat/geometry.hpp"

namespace stagebeat {

enum class EventKind {
  kUserSpeech,
  kAIReactiveSpeech,
  kAIProactiveSpeech,
  kCharacterMovement,
  kCharacterGrab,
  kCharacterObjectGrab,
  kCharacterRelease,
};

inline constexpr std::array<EventKind, 7> kAllEventKinds = {
    EventKind::kUserSpeech,        EventKind::kAIReactiveSpeech, EventKind::kAIProactiveSpeech,
    EventKind::kCharacterMovement, EventKind::kCharacterGrab,    EventKind::kCharacterObjectGrab,
    EventKind::kCharacterRelease,
};

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kUserSpeech: return "UserSpeech";
    case EventKind::kAIReactiveSpeech: return "AIReactiveSpeech";
    case EventKind::kAIProactiveSpeech: return "AIProactiveSpeech";
    case EventKind::kCharacterMovement: return "CharacterMovement";
    case EventKind::kCharacterGrab: return "CharacterGrab";
    case EventKind::kCharacterObjectGrab: return "CharacterObjectGrab";
    case EventKind::kCharacterRelease: return "CharacterRelease";
  }
  return "?";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view name) {
  for (EventKind k : kAllEventKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

inline bool is_speech(EventKind k) {
  return k == EventKind::kUserSpeech || k == EventKind::kAIReactiveSpeech ||
         k == EventKind::kAIProactiveSpeech;
}

inline bool is_ai_speech(EventKind k) {
  return k == EventKind::kAIReactiveSpeech || k == EventKind::kAIProactiveSpeech;
}

/// Everything the author does directly. These reset the inactivity timer.
inline bool is_user_input(EventKind k) { return !is_ai_speech(k); }

enum class Hand { kLeft, kRight };

inline std::string_view to_string(Hand h) { return h == Hand::kLeft ? "Left" : "Right"; }

inline Hand hand_from_string(std::string_view s) {
  if (s == "Left") return Hand::kLeft;
  if (s == "Right") return Hand::kRight;
  throw Error(ErrorCode::kInvalidArgument, "hand must be Left or Right, got " + std::string(s));
}

struct SpeechPayload {
  std::string text;
  std::optional<std::string> addressee;
  /// Id of the AI line this user line replaces (grab-to-override).
  std::optional<std::uint64_t> overrides;
  friend bool operator==(const SpeechPayload&, const SpeechPayload&) = default;
};

struct MovementPayload {
  Vec3 from;
  Vec3 to;
  friend bool operator==(const MovementPayload&, const MovementPayload&) = default;
};

struct ObjectGrabPayload {
  std::string prop;
  Hand hand = Hand::kRight;
  friend bool operator==(const ObjectGrabPayload&, const ObjectGrabPayload&) = default;
};

struct NoPayload {
  friend bool operator==(const NoPayload&, const NoPayload&) = default;
};

using EventPayload = std::variant<NoPayload, SpeechPayload, MovementPayload, ObjectGrabPayload>;

struct InteractionEvent {
  std::uint64_t event_id = 0;  // 0 = assign on append
  Millis t = 0;
  EventKind kind = EventKind::kCharacterGrab;
  std::string actor;
  EventPayload payload;

  const SpeechPayload& speech() const { return std::get<SpeechPayload>(payload); }
  const MovementPayload& movement() const { return std::get<MovementPayload>(payload); }
  const ObjectGrabPayload& object_grab() const { return std::get<ObjectGrabPayload>(payload); }

  friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

}  // namespace stagebeat
