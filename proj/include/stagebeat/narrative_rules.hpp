#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "stagebeat/text.hpp"

// Offline stand-ins for the judgments a language model makes about a beat:
// how tense it is, where it sits in a three-act arc, and what emotion a line
// carries. Used by the deterministic backend and as the fallback whenever a
// remote reply cannot be parsed.

namespace stagebeat {

enum class IntentType { kIncitingIncident, kRisingAction, kClimax, kFallingAction, kResolution };

inline std::string_view to_string(IntentType t) {
  switch (t) {
    case IntentType::kIncitingIncident: return "IncitingIncident";
    case IntentType::kRisingAction: return "RisingAction";
    case IntentType::kClimax: return "Climax";
    case IntentType::kFallingAction: return "FallingAction";
    case IntentType::kResolution: return "Resolution";
  }
  return "?";
}

inline std::optional<IntentType> intent_type_from_string(std::string_view s) {
  for (auto t : {IntentType::kIncitingIncident, IntentType::kRisingAction, IntentType::kClimax,
                 IntentType::kFallingAction, IntentType::kResolution}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

struct WeightedWord {
  std::string_view word;
  int weight;
};

inline constexpr std::array<WeightedWord, 62> kConflictLexicon = {{
    {"kill", 3},      {"killed", 3},     {"gun", 3},        {"pistol", 3},     {"shoot", 3},
    {"die", 3},       {"died", 3},       {"death", 3},      {"dead", 3},       {"murder", 3},
    {"blood", 3},     {"weapon", 3},     {"threaten", 3},   {"sword", 3},      {"dagger", 3},
    {"evil", 2},      {"tyrant", 2},     {"greed", 2},      {"steal", 2},      {"stole", 2},
    {"thief", 2},     {"hate", 2},       {"fight", 2},      {"attack", 2},     {"revenge", 2},
    {"vengeance", 2}, {"enemy", 2},      {"dare", 2},       {"run", 2},        {"destroy", 2},
    {"punish", 2},    {"betray", 2},     {"rival", 2},      {"seize", 2},      {"undoing", 2},
    {"tired", 1},     {"terrible", 1},   {"sadness", 1},    {"angry", 1},      {"anger", 1},
    {"excuses", 1},   {"starving", 1},   {"taxes", 1},      {"oaf", 1},        {"sniveling", 1},
    {"folly", 1},     {"desperation", 1}, {"ass", 1},       {"asshole", 1},    {"bull", 1},
    {"nonsense", 1},  {"greedy", 1},     {"threat", 1},     {"afraid", 1},     {"warn", 1},
    {"nightmare", 1}, {"tax", 1},        {"liar", 1},       {"fool", 1},       {"conscience", 1},
    {"coffers", 1},   {"power", 1},
}};

inline int conflict_weight(std::string_view word) {
  for (const auto& w : kConflictLexicon)
    if (w.word == word) return w.weight;
  return 0;
}

struct TensionParams {
  double density_scale = 40.0;
  std::size_t min_words = 8;
};

/// Sum of lexicon weights over the words of `text`, plus any extra signal
/// hits contributed by physical actions (a drawn weapon, say).
inline int conflict_hits(std::string_view text) {
  int hits = 0;
  for (const auto& w : text::words(text)) hits += conflict_weight(w);
  return hits;
}

/// Keyword density mapped onto the 1..10 tension scale.
inline int tension_from_density(int hits, std::size_t word_count, const TensionParams& p = {}) {
  double denom = static_cast<double>(std::max(word_count, p.min_words));
  double density = static_cast<double>(hits) / denom;
  int t = 1 + static_cast<int>(std::floor(density * p.density_scale));
  return std::clamp(t, 1, 10);
}

inline int tension_of(std::string_view text, int extra_hits = 0, const TensionParams& p = {}) {
  return tension_from_density(conflict_hits(text) + extra_hits, text::words(text).size(), p);
}

struct ArcPosition {
  /// Fraction of the expected session length elapsed at the end of the beat.
  double progress = 0.0;
  std::optional<int> previous_tension;
  bool climax_seen = false;
};

/// Three-act placement: a tense local peak is the Climax; otherwise position
/// in the session decides, with declining tension after the midpoint or a
/// climax reading as FallingAction.
inline IntentType intent_type_for(int tension, const ArcPosition& arc) {
  const bool local_peak = !arc.previous_tension || tension >= *arc.previous_tension;
  if (tension >= 8 && local_peak) return IntentType::kClimax;
  if (arc.progress < 0.15) return IntentType::kIncitingIncident;
  if (arc.progress >= 0.90) return IntentType::kResolution;
  const bool declining = arc.previous_tension && tension < *arc.previous_tension;
  if (declining && (arc.progress >= 0.70 || arc.climax_seen)) return IntentType::kFallingAction;
  return IntentType::kRisingAction;
}

struct EmotionCategory {
  std::string_view name;
  std::array<std::string_view, 10> cues;
};

inline constexpr std::array<EmotionCategory, 6> kEmotionLexicon = {{
    {"desperate",
     {"please", "help", "starving", "hungry", "eaten", "children", "family", "beg", "hope", "save"}},
    {"angry", {"evil", "tyrant", "hate", "dare", "tired", "greed", "ass", "asshole", "oaf", "bull"}},
    {"fearful", {"afraid", "scared", "fear", "run", "danger", "hide", "", "", "", ""}},
    {"triumphant", {"ha", "won", "mine", "triumph", "victory", "got", "", "", "", ""}},
    {"contemptuous",
     {"nonsense", "folly", "platitudes", "trivial", "unwashed", "vagaries", "sentimentality",
      "weak", "", ""}},
    {"joyful", {"joy", "incredible", "wonderful", "perfect", "happy", "lovely", "good", "", "", ""}},
}};

/// Dominant emotion cue in a line; "calm" when nothing matches. Ties go to
/// the earlier category.
inline std::string emotion_of(std::string_view line) {
  auto ws = text::words(line);
  std::string_view best = "calm";
  int best_hits = 0;
  for (const auto& cat : kEmotionLexicon) {
    int hits = 0;
    for (const auto& w : ws)
      for (auto cue : cat.cues)
        if (!cue.empty() && w == cue) ++hits;
    if (hits > best_hits) {
      best_hits = hits;
      best = cat.name;
    }
  }
  return std::string(best);
}

inline std::string tone_for_tension(int tension) {
  if (tension >= 8) return "Explosive";
  if (tension >= 5) return "Heated";
  if (tension >= 3) return "Uneasy";
  return "Calm";
}

}  // namespace stagebeat
