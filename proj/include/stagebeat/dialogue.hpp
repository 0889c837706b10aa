#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stagebeat/backend.hpp"
#include "stagebeat/errors.hpp"
#include "stagebeat/interaction_log.hpp"
#include "stagebeat/scene.hpp"
#include "stagebeat/text.hpp"

namespace stagebeat {

inline constexpr std::size_t kMinTokenBudget = 512;
inline constexpr std::size_t kMaxCueWords = 150;

struct PendingReply {
  std::string speaker;
  std::string addressee;
  std::uint64_t cue_event = 0;
  Millis requested_t = 0;
  /// Id of the newest log event when the request went out.
  std::uint64_t issued_after = 0;
  EventKind kind = EventKind::kAIReactiveSpeech;
};

struct TurnState {
  Millis last_input_t = 0;
  std::optional<PendingReply> pending_reply;
  bool ai_speaking = false;
};

/// Who a line is meant for: the character named earliest in the text (the
/// longer name wins at equal positions), else the character the speaker
/// faces, else the nearest one. Nullopt only when the speaker is alone.
inline std::optional<std::string> infer_addressee(const SceneState& scene,
                                                  std::string_view speaker_id,
                                                  std::string_view line,
                                                  const SceneParams& params = {}) {
  const Character& speaker = scene.character(speaker_id);
  std::optional<std::string> best;
  std::size_t best_pos = 0, best_len = 0;
  for (const auto& c : scene.characters) {
    if (c.id == speaker.id) continue;
    std::vector<std::string> names{c.name};
    names.insert(names.end(), c.aliases.begin(), c.aliases.end());
    for (const auto& n : names) {
      auto pos = text::find_whole_word(line, n);
      if (!pos) continue;
      if (!best || *pos < best_pos || (*pos == best_pos && n.size() > best_len)) {
        best = c.id;
        best_pos = *pos;
        best_len = n.size();
      }
    }
  }
  if (best) return best;
  if (auto faced = faced_character(scene, speaker.id, params)) return faced;
  return nearest_character(scene, speaker.id);
}

/// The AI line a new user line by `character` replaces: that character's
/// latest event other than grab/release, when it is AI speech.
inline std::optional<std::uint64_t> override_target(const SessionLog& log,
                                                    std::string_view character) {
  const auto& evs = log.events();
  for (auto it = evs.rbegin(); it != evs.rend(); ++it) {
    if (it->actor != character) continue;
    if (it->kind == EventKind::kCharacterGrab || it->kind == EventKind::kCharacterRelease) continue;
    if (is_ai_speech(it->kind) && !log.is_overridden(it->event_id)) return it->event_id;
    return std::nullopt;
  }
  return std::nullopt;
}

/// Builds the UserSpeech event for a held character. Not yet appended.
inline InteractionEvent user_speak(const SceneState& scene, const SessionLog& log,
                                   std::string_view character_id, std::string_view line,
                                   Millis t, const SceneParams& params = {}) {
  const Character& c = scene.character(character_id);
  if (c.state != CharacterState::kHeldByUser) throw Error(ErrorCode::kCharacterNotHeld, c.id);
  std::string trimmed = text::trim(line);
  if (trimmed.empty()) throw Error(ErrorCode::kEmptyUtterance, c.id);
  SpeechPayload sp;
  sp.text = trimmed;
  sp.addressee = infer_addressee(scene, c.id, trimmed, params);
  sp.overrides = override_target(log, c.id);
  return InteractionEvent{0, t, EventKind::kUserSpeech, c.id, std::move(sp)};
}

// --- prompt assembly -------------------------------------------------------------

struct PromptInputs {
  const SceneState* scene = nullptr;
  const StoryRoleConfiguration* roles = nullptr;
  const SessionLog* log = nullptr;
  /// Summaries of committed frames, oldest first.
  std::vector<std::string> story_so_far;
  std::string speaker;
  std::string addressee;
  /// Event being answered; 0 for proactive speech.
  std::uint64_t cue_event = 0;
  Millis now = 0;
  std::size_t budget = 1024;
  /// How many recent frame summaries to include.
  std::size_t summary_window = 5;
  /// Radius for the filtered scene description.
  double context_radius_m = 1.5;
};

namespace dialogue_detail {

inline std::string name_of(const SceneState& s, const std::string& id) {
  if (const auto* c = s.find_character(id)) return c->name;
  return id;
}

inline std::string fmt_pos(Vec3 p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%.2f, %.2f)", p.x, p.z);
  return buf;
}

inline std::string clip_words(const std::string& s, std::size_t max_words) {
  std::vector<std::string> kept;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) kept.push_back(std::move(cur));
      cur.clear();
      if (kept.size() == max_words) break;
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty() && kept.size() < max_words) kept.push_back(cur);
  return text::join(kept, " ");
}

}  // namespace dialogue_detail

/// Persona block for the speaker, in the same CHARACTER/Motivation/Traits
/// layout the frame prompt uses.
inline std::string persona_prompt(const SceneState& scene, const StoryRoleConfiguration& roles,
                                  const std::string& speaker, const std::string& addressee) {
  const Character& c = scene.character(speaker);
  const CharacterRole* r = roles.find(c.role_config_ref);
  std::string out = "You voice one character in a live improvised scene";
  if (!roles.location.empty()) out += " at " + roles.location;
  if (!roles.time.empty()) out += " (" + roles.time + ")";
  out += ".\n";
  out += "CHARACTER: " + c.name + " is the " + (r ? r->role : std::string("character")) + ".\n";
  out += "Motivation: " + (r ? r->motivation : std::string("unspecified")) + "\n";
  out += "Traits: " + (r ? text::join(r->traits, ", ") : std::string("unspecified")) + "\n";
  if (r && !r->relationships.empty()) out += "Relationships: " + r->relationships + "\n";
  if (roles.task_mode == TaskMode::kGoalDriven && !roles.goal.empty())
    out += "Story goal: " + roles.goal + "\n";
  out += "Answer with one short line of dialogue spoken to " +
         dialogue_detail::name_of(scene, addressee) + ". No stage directions.\n";
  return out;
}

/// Characters and props near the speaker or addressee, plus zones they
/// stand in.
inline std::string scene_summary(const SceneState& scene, const std::string& speaker,
                                 const std::string& addressee, double radius) {
  using dialogue_detail::fmt_pos;
  const Character& s = scene.character(speaker);
  const Character* a = scene.find_character(addressee);
  auto near = [&](Vec3 p) {
    return distance(p, s.position) <= radius || (a && distance(p, a->position) <= radius);
  };
  std::string out = "SCENE: " + scene.environment_label + "\n";
  for (const auto& c : scene.characters) {
    if (c.id != s.id && (!a || c.id != a->id) && !near(c.position)) continue;
    out += "- " + c.name + " at " + fmt_pos(c.position);
    auto zones = zone_membership(scene, c.position);
    for (const auto& z : zones)
      for (const auto& zz : scene.zones)
        if (zz.id == z) out += ", in " + zz.tag;
    if (c.held_prop) out += ", holding " + scene.prop(*c.held_prop).name;
    out += "\n";
  }
  for (const auto& p : scene.props) {
    if (p.attached_to || !near(p.position)) continue;  // held props are listed with the holder
    out += "- " + p.name + " at " + fmt_pos(p.position) + "\n";
  }
  return out;
}

/// Assembles a generation request within the token budget. Fixed sections
/// (persona, scene, story so far, cue) always appear; dialogue history fills
/// the rest from newest to oldest and stops at the first line that does not
/// fit, so the kept history is a suffix that grows with the budget.
inline GenerationRequest assemble_prompt(const PromptInputs& in) {
  if (in.budget < kMinTokenBudget)
    throw Error(ErrorCode::kBudgetTooSmall, std::to_string(in.budget) + " < 512");
  const SceneState& scene = *in.scene;
  GenerationRequest req;
  req.purpose = RequestPurpose::kDialogue;
  req.token_budget = in.budget;
  req.speaker = in.speaker;
  req.addressee = in.addressee;
  req.speaker_name = dialogue_detail::name_of(scene, in.speaker);
  req.addressee_name = dialogue_detail::name_of(scene, in.addressee);
  if (const auto* role = in.roles->find(scene.character(in.speaker).role_config_ref))
    req.speaker_role = role->role;
  req.system_prompt = persona_prompt(scene, *in.roles, in.speaker, in.addressee);

  std::string fixed = scene_summary(scene, in.speaker, in.addressee, in.context_radius_m);
  if (!in.story_so_far.empty()) {
    std::size_t from =
        in.story_so_far.size() > in.summary_window ? in.story_so_far.size() - in.summary_window : 0;
    fixed += "STORY SO FAR:";
    for (std::size_t i = from; i < in.story_so_far.size(); ++i) fixed += " " + in.story_so_far[i] + ".";
    fixed += "\n";
  }
  std::string cue_block;
  std::vector<DialogueLine> lines = dialogue_history(*in.log, in.now);
  for (const auto& l : lines) {
    if (l.event_id == in.cue_event && in.cue_event != 0) {
      req.cue_line = dialogue_detail::clip_words(l.text, kMaxCueWords);
      cue_block = "RESPOND TO: " + dialogue_detail::name_of(scene, l.speaker) + ": " + req.cue_line +
                  "\n";
    }
  }

  auto estimate = [&](const std::string& history_block) {
    return text::tokens_for_words(text::whitespace_word_count(req.system_prompt) +
                                  text::whitespace_word_count(fixed) +
                                  text::whitespace_word_count(history_block) +
                                  text::whitespace_word_count(cue_block));
  };
  if (estimate("RECENT DIALOGUE:") > in.budget)
    throw Error(ErrorCode::kBudgetTooSmall, "fixed prompt sections exceed " + std::to_string(in.budget));

  // Newest first; the first line that does not fit ends the history.
  std::vector<std::string> kept;
  std::size_t words = text::whitespace_word_count("RECENT DIALOGUE:");
  const std::size_t base = text::whitespace_word_count(req.system_prompt) +
                           text::whitespace_word_count(fixed) +
                           text::whitespace_word_count(cue_block);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (it->overridden || (in.cue_event != 0 && it->event_id == in.cue_event)) continue;
    std::string rendered = dialogue_detail::name_of(scene, it->speaker) + ": " + it->text;
    std::size_t w = text::whitespace_word_count(rendered);
    if (text::tokens_for_words(base + words + w) > in.budget) break;
    words += w;
    kept.push_back(std::move(rendered));
  }
  std::reverse(kept.begin(), kept.end());
  req.history = kept;
  std::string history_block = "RECENT DIALOGUE:\n";
  for (const auto& k : kept) history_block += k + "\n";
  req.context_block = fixed + history_block + cue_block;
  return req;
}

// --- speaker selection --------------------------------------------------------------

/// Proactive speaker: the free character with the fewest lines among the
/// last `window` non-overridden speech events; scene order breaks ties.
inline std::optional<std::string> proactive_speaker(const SceneState& scene, const SessionLog& log,
                                                    std::size_t window = 10) {
  std::map<std::string, int> counts;
  std::size_t seen = 0;
  const auto& evs = log.events();
  for (auto it = evs.rbegin(); it != evs.rend() && seen < window; ++it) {
    if (!is_speech(it->kind) || log.is_overridden(it->event_id)) continue;
    ++counts[it->actor];
    ++seen;
  }
  std::optional<std::string> best;
  int best_n = 0;
  for (const auto& c : scene.characters) {
    if (c.state == CharacterState::kHeldByUser) continue;
    int n = counts.count(c.id) ? counts[c.id] : 0;
    if (!best || n < best_n) {
      best = c.id;
      best_n = n;
    }
  }
  return best;
}

/// Whom an unprompted line is aimed at: the faced character, else the
/// nearest.
inline std::optional<std::string> proactive_addressee(const SceneState& scene,
                                                      const std::string& speaker,
                                                      const SceneParams& params = {}) {
  if (auto f = faced_character(scene, speaker, params)) return f;
  return nearest_character(scene, speaker);
}

/// Whether a pending reply must be dropped: its speaker was picked up by the
/// author after the request went out.
inline bool reply_is_stale(const SessionLog& log, const PendingReply& p) {
  for (auto it = log.events().rbegin(); it != log.events().rend(); ++it) {
    if (it->event_id <= p.issued_after) break;
    if (it->kind == EventKind::kCharacterGrab && it->actor == p.speaker) return true;
  }
  return false;
}

}  // namespace stagebeat
