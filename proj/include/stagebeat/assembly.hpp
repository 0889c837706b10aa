#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/errors.hpp"
#include "stagebeat/fusion.hpp"
#include "stagebeat/interaction_log.hpp"
#include "stagebeat/scene.hpp"
#include "stagebeat/text.hpp"

namespace stagebeat {

struct CharacterPose {
  std::string id;
  Vec3 position;
  Vec3 facing;
  std::optional<std::string> held_prop;
  CharacterState state = CharacterState::kIdle;
  friend bool operator==(const CharacterPose&, const CharacterPose&) = default;
};

struct PropPose {
  std::string id;
  Vec3 position;
  std::optional<Attachment> attached_to;
  friend bool operator==(const PropPose&, const PropPose&) = default;
};

struct SceneSnapshot {
  Millis t = 0;
  std::vector<CharacterPose> characters;
  std::vector<PropPose> props;
  std::string environment_label;
  /// Number of speech events with t <= the capture time.
  std::size_t dialogue_index = 0;
  friend bool operator==(const SceneSnapshot&, const SceneSnapshot&) = default;
};

inline SceneSnapshot take_snapshot(const SceneState& scene, const SessionLog& log, Millis t) {
  SceneSnapshot s;
  s.t = t;
  s.environment_label = scene.environment_label;
  for (const auto& c : scene.characters)
    s.characters.push_back({c.id, c.position, c.facing, c.held_prop, c.state});
  for (const auto& p : scene.props) s.props.push_back({p.id, p.position, p.attached_to});
  for (const auto& e : log.events()) {
    if (e.t > t) break;
    if (is_speech(e.kind)) ++s.dialogue_index;
  }
  return s;
}

/// Whether every attachment in the snapshot names a posed character.
inline bool self_consistent(const SceneSnapshot& s) {
  for (const auto& p : s.props) {
    if (!p.attached_to) continue;
    bool found = std::any_of(s.characters.begin(), s.characters.end(),
                             [&](const CharacterPose& c) { return c.id == p.attached_to->character; });
    if (!found) return false;
  }
  return true;
}

struct MarbleCard {
  std::string summary;
  std::vector<std::string> characters;
  int tension = 1;
  IntentType intent_type = IntentType::kRisingAction;
  friend bool operator==(const MarbleCard&, const MarbleCard&) = default;
};

struct StoryMarble {
  std::uint64_t marble_id = 0;
  std::uint64_t frame_id = 0;
  MarbleCard card;
  SceneSnapshot snapshot;
  Millis capture_t = 0;
  /// Props the frame's observations touched (handled, approached).
  std::vector<std::string> props;
  /// Characters who entered an exit-tagged zone during the frame.
  std::vector<std::string> exits;
  friend bool operator==(const StoryMarble&, const StoryMarble&) = default;
};

inline bool is_exit_tag(std::string_view tag) {
  return text::contains_whole_word(tag, "exit") || text::contains_whole_word(tag, "offstage") ||
         text::lower(tag).find("exit") != std::string::npos ||
         text::lower(tag).find("offstage") != std::string::npos;
}

/// Builds the marble for a committed frame. `scene_at_end` is the scene as
/// of frame.t_end; `features` are the frame's source features.
inline StoryMarble spawn_marble(const IntentFrame& frame, const SceneState& scene_at_end,
                                const SessionLog& log,
                                const std::vector<IntentFeature>& features = {}) {
  StoryMarble m;
  m.frame_id = frame.frame_id;
  m.capture_t = frame.t_end;
  m.card.summary = frame.summary;
  m.card.tension = frame.tension;
  m.card.intent_type = frame.intent_type;
  for (const auto& id : frame.characters)
    if (scene_at_end.find_character(id)) m.card.characters.push_back(id);
  m.snapshot = take_snapshot(scene_at_end, log, frame.t_end);
  std::set<std::string> props, exits;
  for (const auto& f : features) {
    if (scene_at_end.find_prop(f.actor)) props.insert(f.actor);
    if (f.target && scene_at_end.find_prop(*f.target)) props.insert(*f.target);
    if (f.label == labels::kZoneEntry && f.target && scene_at_end.find_character(f.actor)) {
      for (const auto& z : scene_at_end.zones)
        if (z.id == *f.target && is_exit_tag(z.tag)) exits.insert(f.actor);
    }
  }
  m.props.assign(props.begin(), props.end());
  m.exits.assign(exits.begin(), exits.end());
  return m;
}

/// Ordered marble ids with undoable edits. Marbles removed from the order
/// stay in storage so undo can bring them back.
class Timeline {
 public:
  static constexpr std::size_t kUndoDepth = 32;

  /// Appends a marble, assigning the next id. Returns the id.
  std::uint64_t add(StoryMarble m) {
    m.marble_id = next_id_++;
    std::uint64_t id = m.marble_id;
    order_.push_back(id);
    store_[id] = std::move(m);
    return id;
  }

  void reorder(std::uint64_t id, std::size_t new_position) {
    auto it = std::find(order_.begin(), order_.end(), id);
    if (it == order_.end()) throw Error(ErrorCode::kUnknownMarble, std::to_string(id));
    if (new_position >= order_.size())
      throw Error(ErrorCode::kPositionOutOfRange,
                  std::to_string(new_position) + " not in [0, " + std::to_string(order_.size()) + ")");
    remember();
    order_.erase(it);
    order_.insert(order_.begin() + static_cast<std::ptrdiff_t>(new_position), id);
  }

  void remove(std::uint64_t id) {
    auto it = std::find(order_.begin(), order_.end(), id);
    if (it == order_.end()) throw Error(ErrorCode::kUnknownMarble, std::to_string(id));
    remember();
    order_.erase(it);
  }

  /// Reverts the last edit. False when there is nothing to undo.
  bool undo() {
    if (history_.empty()) return false;
    order_ = history_.back();
    history_.pop_back();
    return true;
  }

  /// Replaces the order wholesale (document restore). Every id must be
  /// stored and appear once.
  void set_order(const std::vector<std::uint64_t>& ids) {
    std::set<std::uint64_t> seen;
    for (auto id : ids) {
      if (!store_.count(id)) throw Error(ErrorCode::kUnknownMarble, std::to_string(id));
      if (!seen.insert(id).second)
        throw Error(ErrorCode::kSchemaViolation, "/timeline: duplicate marble " + std::to_string(id));
    }
    order_ = ids;
    history_.clear();
  }

  const std::vector<std::uint64_t>& order() const { return order_; }
  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }
  std::size_t undo_depth() const { return history_.size(); }

  std::optional<std::size_t> position_of(std::uint64_t id) const {
    auto it = std::find(order_.begin(), order_.end(), id);
    if (it == order_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - order_.begin());
  }

  bool contains(std::uint64_t id) const { return position_of(id).has_value(); }

  const StoryMarble& marble(std::uint64_t id) const {
    if (!contains(id)) throw Error(ErrorCode::kUnknownMarble, std::to_string(id));
    return store_.at(id);
  }

  /// Marbles in timeline order.
  std::vector<StoryMarble> ordered() const {
    std::vector<StoryMarble> out;
    for (auto id : order_) out.push_back(store_.at(id));
    return out;
  }

  /// Marble at a timeline position.
  const StoryMarble& at(std::size_t position) const {
    if (position >= order_.size())
      throw Error(ErrorCode::kPositionOutOfRange, std::to_string(position));
    return store_.at(order_[position]);
  }

 private:
  void remember() {
    history_.push_back(order_);
    if (history_.size() > kUndoDepth) history_.pop_front();
  }

  std::vector<std::uint64_t> order_;
  std::map<std::uint64_t, StoryMarble> store_;
  std::deque<std::vector<std::uint64_t>> history_;
  std::uint64_t next_id_ = 1;
};

struct MarbleReplay {
  SceneSnapshot snapshot;
  std::vector<DialogueLine> dialogue;
};

/// Stored snapshot plus the dialogue up to its capture index. Pure.
inline MarbleReplay replay(const Timeline& timeline, std::uint64_t marble_id,
                           const SessionLog& log) {
  const StoryMarble& m = timeline.marble(marble_id);
  MarbleReplay r{m.snapshot, {}};
  auto all = dialogue_history(log);
  std::size_t n = std::min(m.snapshot.dialogue_index, all.size());
  r.dialogue.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
  return r;
}

// --- JSON -------------------------------------------------------------------------

inline nlohmann::json snapshot_to_json(const SceneSnapshot& s) {
  nlohmann::json chars = nlohmann::json::array(), props = nlohmann::json::array();
  for (const auto& c : s.characters)
    chars.push_back({{"id", c.id},
                     {"position", vec3_to_json(c.position)},
                     {"facing", vec3_to_json(c.facing)},
                     {"held_prop", c.held_prop ? nlohmann::json(*c.held_prop) : nlohmann::json(nullptr)},
                     {"state", to_string(c.state)}});
  for (const auto& p : s.props) {
    nlohmann::json att = nullptr;
    if (p.attached_to)
      att = {{"character", p.attached_to->character}, {"hand", to_string(p.attached_to->hand)}};
    props.push_back({{"id", p.id}, {"position", vec3_to_json(p.position)}, {"attached_to", att}});
  }
  return {{"t", s.t},
          {"environment_label", s.environment_label},
          {"dialogue_index", s.dialogue_index},
          {"characters", chars},
          {"props", props}};
}

inline nlohmann::json marble_to_json(const StoryMarble& m, std::optional<std::size_t> position) {
  return {{"marble_id", m.marble_id},
          {"frame_id", m.frame_id},
          {"timeline_position", position ? nlohmann::json(*position) : nlohmann::json(nullptr)},
          {"capture_t", m.capture_t},
          {"card",
           {{"summary", m.card.summary},
            {"characters", m.card.characters},
            {"tension", m.card.tension},
            {"intent_type", to_string(m.card.intent_type)}}},
          {"props", m.props},
          {"exits", m.exits},
          {"snapshot", snapshot_to_json(m.snapshot)}};
}

inline nlohmann::json timeline_to_json(const Timeline& t) {
  nlohmann::json marbles = nlohmann::json::array();
  for (std::size_t i = 0; i < t.size(); ++i) marbles.push_back(marble_to_json(t.at(i), i));
  return marbles;
}

}  // namespace stagebeat
