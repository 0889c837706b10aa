#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "stagebeat/errors.hpp"
#include "stagebeat/events.hpp"
#include "stagebeat/geometry.hpp"

namespace stagebeat {

enum class Agent { kEnvironment, kSocial, kNarrator };

inline std::string_view to_string(Agent a) {
  switch (a) {
    case Agent::kEnvironment: return "Environment";
    case Agent::kSocial: return "Social";
    case Agent::kNarrator: return "Narrator";
  }
  return "?";
}

namespace labels {
// Environment
inline constexpr std::string_view kMovementTrail = "movement_trail";
inline constexpr std::string_view kZoneEntry = "zone_entry";
inline constexpr std::string_view kZoneExit = "zone_exit";
inline constexpr std::string_view kPropProximity = "prop_proximity";
inline constexpr std::string_view kCharacterProximity = "character_proximity";
inline constexpr std::string_view kProximityGrouping = "proximity_grouping";
// Social
inline constexpr std::string_view kCharacterEncounter = "character_encounter";
inline constexpr std::string_view kPropEncounter = "prop_encounter";
inline constexpr std::string_view kCharacterInteraction = "character_interaction";
inline constexpr std::string_view kPropHandling = "prop_handling";
inline constexpr std::string_view kRelationShift = "relation_shift";
// Narrator
inline constexpr std::string_view kCharacterSpeech = "character_speech";
}  // namespace labels

struct RegisteredLabel {
  std::string_view label;
  Agent agent;
};

inline constexpr std::array<RegisteredLabel, 12> kLabelVocabulary = {{
    {labels::kMovementTrail, Agent::kEnvironment},
    {labels::kZoneEntry, Agent::kEnvironment},
    {labels::kZoneExit, Agent::kEnvironment},
    {labels::kPropProximity, Agent::kEnvironment},
    {labels::kCharacterProximity, Agent::kEnvironment},
    {labels::kProximityGrouping, Agent::kEnvironment},
    {labels::kCharacterEncounter, Agent::kSocial},
    {labels::kPropEncounter, Agent::kSocial},
    {labels::kCharacterInteraction, Agent::kSocial},
    {labels::kPropHandling, Agent::kSocial},
    {labels::kRelationShift, Agent::kSocial},
    {labels::kCharacterSpeech, Agent::kNarrator},
}};

inline std::optional<Agent> agent_for_label(std::string_view label) {
  for (const auto& l : kLabelVocabulary)
    if (l.label == label) return l.agent;
  return std::nullopt;
}

/// One agent's observation. `salience` holds E, S or N depending on `agent`.
struct IntentFeature {
  std::uint64_t feature_id = 0;
  Agent agent = Agent::kEnvironment;
  std::string actor;
  std::optional<std::string> target;
  Vec3 location;
  Millis t = 0;
  std::string label;
  double confidence = 1.0;
  double salience = 0.0;
  std::uint64_t source_event = 0;

  double environmental() const { return agent == Agent::kEnvironment ? salience : 0.0; }
  double social() const { return agent == Agent::kSocial ? salience : 0.0; }
  double narrative() const { return agent == Agent::kNarrator ? salience : 0.0; }

  /// Equality ignoring feature_id, for determinism checks.
  bool same_observation(const IntentFeature& o) const {
    return agent == o.agent && actor == o.actor && target == o.target && location == o.location &&
           t == o.t && label == o.label && confidence == o.confidence && salience == o.salience &&
           source_event == o.source_event;
  }
};

/// Whether a feature is well-formed: registered label owned by its agent,
/// confidence and salience in [0, 1].
inline bool is_valid(const IntentFeature& f) {
  auto owner = agent_for_label(f.label);
  return owner && *owner == f.agent && f.confidence >= 0.0 && f.confidence <= 1.0 &&
         f.salience >= 0.0 && f.salience <= 1.0 && std::isfinite(f.salience);
}

enum class Evidence { kDirectUser, kAiSpeech, kInferredSpatial };

inline double confidence_of(Evidence e) {
  switch (e) {
    case Evidence::kDirectUser: return 1.0;
    case Evidence::kAiSpeech: return 0.8;
    case Evidence::kInferredSpatial: return 0.6;
  }
  return 0.0;
}

inline double confidence_of(EventKind kind) {
  return confidence_of(is_ai_speech(kind) ? Evidence::kAiSpeech : Evidence::kDirectUser);
}

}  // namespace stagebeat
