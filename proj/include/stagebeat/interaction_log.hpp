#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/errors.hpp"
#include "stagebeat/events.hpp"

namespace stagebeat {

inline constexpr int kSchemaVersion = 1;

struct LogMetadata {
  Millis duration_ms = 0;
  std::optional<Millis> export_time;
  std::map<EventKind, int> interaction_counts;
  friend bool operator==(const LogMetadata&, const LogMetadata&) = default;
};

/// Ordered, append-only record of a session.
class SessionLog {
 public:
  SessionLog() { reset_counts(); }
  SessionLog(std::string session_id, std::string scene_id, std::string created_at)
      : session_id_(std::move(session_id)),
        scene_id_(std::move(scene_id)),
        created_at_(std::move(created_at)) {
    reset_counts();
  }

  const std::string& session_id() const { return session_id_; }
  const std::string& scene_id() const { return scene_id_; }
  const std::string& created_at() const { return created_at_; }
  const std::vector<InteractionEvent>& events() const { return events_; }
  const LogMetadata& metadata() const { return metadata_; }
  bool empty() const { return events_.empty(); }
  Millis last_t() const { return events_.empty() ? 0 : events_.back().t; }

  /// Appends `ev`, assigning the next id when `ev.event_id` is 0.
  /// Returns the stored event. Ties in `t` are ordered by insertion.
  const InteractionEvent& append(InteractionEvent ev) {
    if (!events_.empty() && ev.t < events_.back().t) {
      throw Error(ErrorCode::kNonMonotonicTimestamp,
                  "t=" + std::to_string(ev.t) + " after t=" + std::to_string(events_.back().t));
    }
    if (ev.event_id == 0) ev.event_id = next_id_;
    if (ids_.count(ev.event_id)) {
      throw Error(ErrorCode::kSchemaViolation,
                  "/events: duplicate event_id " + std::to_string(ev.event_id));
    }
    if (is_speech(ev.kind)) {
      if (!std::holds_alternative<SpeechPayload>(ev.payload) || ev.speech().text.empty()) {
        throw Error(ErrorCode::kEmptyUtterance, "speech event without text");
      }
      if (ev.speech().overrides) overridden_.insert(*ev.speech().overrides);
    }
    next_id_ = std::max(next_id_, ev.event_id + 1);
    ids_.insert(ev.event_id);
    ++metadata_.interaction_counts[ev.kind];
    metadata_.duration_ms = std::max(metadata_.duration_ms, ev.t);
    events_.push_back(std::move(ev));
    return events_.back();
  }

  /// Extends the recorded session duration (end of play, export).
  void extend_duration(Millis t) { metadata_.duration_ms = std::max(metadata_.duration_ms, t); }
  void set_export_time(Millis t) { metadata_.export_time = t; }

  bool is_overridden(std::uint64_t event_id) const { return overridden_.count(event_id) > 0; }
  const std::set<std::uint64_t>& overridden() const { return overridden_; }

  const InteractionEvent* find(std::uint64_t event_id) const {
    for (const auto& e : events_)
      if (e.event_id == event_id) return &e;
    return nullptr;
  }

  friend bool operator==(const SessionLog& a, const SessionLog& b) {
    return a.session_id_ == b.session_id_ && a.scene_id_ == b.scene_id_ &&
           a.created_at_ == b.created_at_ && a.events_ == b.events_ &&
           a.metadata_ == b.metadata_;
  }

 private:
  void reset_counts() {
    for (EventKind k : kAllEventKinds) metadata_.interaction_counts[k] = 0;
  }

  std::string session_id_;
  std::string scene_id_;
  std::string created_at_;
  std::vector<InteractionEvent> events_;
  LogMetadata metadata_;
  std::set<std::uint64_t> ids_;
  std::set<std::uint64_t> overridden_;
  std::uint64_t next_id_ = 1;
};

inline SessionLog append_event(SessionLog log, InteractionEvent ev) {
  log.append(std::move(ev));
  return log;
}

struct DialogueLine {
  std::uint64_t event_id = 0;
  Millis t = 0;
  std::string speaker;
  std::optional<std::string> addressee;
  std::string text;
  EventKind kind = EventKind::kUserSpeech;
  bool overridden = false;
  friend bool operator==(const DialogueLine&, const DialogueLine&) = default;
};

/// Every speech event with t <= up_to_t, in log order. Overridden AI lines
/// are included and flagged.
inline std::vector<DialogueLine> dialogue_history(const SessionLog& log, Millis up_to_t) {
  std::vector<DialogueLine> out;
  for (const auto& e : log.events()) {
    if (e.t > up_to_t) break;
    if (!is_speech(e.kind)) continue;
    const auto& sp = e.speech();
    out.push_back({e.event_id, e.t, e.actor, sp.addressee, sp.text, e.kind,
                   log.is_overridden(e.event_id)});
  }
  return out;
}

inline std::vector<DialogueLine> dialogue_history(const SessionLog& log) {
  return dialogue_history(log, std::numeric_limits<Millis>::max());
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

namespace json_detail {

using nlohmann::json;

[[noreturn]] inline void violation(const std::string& path, const std::string& what = {}) {
  throw Error(ErrorCode::kSchemaViolation, what.empty() ? path : path + ": " + what);
}

inline void only_keys(const json& obj, const std::string& path,
                      std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) violation(path, "expected object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      violation(path + "/" + it.key(), "unknown field");
    }
  }
}

inline const json& require(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) violation(path + "/" + key, "missing");
  return *it;
}

inline std::string require_string(const json& obj, const std::string& path, const char* key) {
  const json& v = require(obj, path, key);
  if (!v.is_string()) violation(path + "/" + key, "expected string");
  return v.get<std::string>();
}

inline std::int64_t require_int(const json& obj, const std::string& path, const char* key) {
  const json& v = require(obj, path, key);
  if (!v.is_number_integer()) violation(path + "/" + key, "expected integer");
  return v.get<std::int64_t>();
}

inline double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) violation(path, "expected number");
  return v.get<double>();
}

}  // namespace json_detail

inline nlohmann::json vec3_to_json(Vec3 v) { return nlohmann::json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) json_detail::violation(path, "expected [x, y, z]");
  Vec3 v{json_detail::as_double(j[0], path + "/0"), json_detail::as_double(j[1], path + "/1"),
         json_detail::as_double(j[2], path + "/2")};
  if (!v.finite()) json_detail::violation(path, "non-finite");
  return v;
}

inline nlohmann::json event_to_json(const InteractionEvent& e) {
  nlohmann::json payload = nlohmann::json::object();
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SpeechPayload>) {
          payload["text"] = p.text;
          payload["addressee"] = p.addressee ? nlohmann::json(*p.addressee) : nlohmann::json();
          if (p.overrides) payload["overrides"] = *p.overrides;
        } else if constexpr (std::is_same_v<P, MovementPayload>) {
          payload["from"] = vec3_to_json(p.from);
          payload["to"] = vec3_to_json(p.to);
        } else if constexpr (std::is_same_v<P, ObjectGrabPayload>) {
          payload["prop"] = p.prop;
          payload["hand"] = std::string(to_string(p.hand));
        }
      },
      e.payload);
  return {{"event_id", e.event_id},
          {"t", e.t},
          {"kind", std::string(to_string(e.kind))},
          {"actor", e.actor},
          {"payload", payload}};
}

inline InteractionEvent event_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace json_detail;
  only_keys(j, path, {"event_id", "t", "kind", "actor", "payload"});
  InteractionEvent e;
  std::int64_t id = require_int(j, path, "event_id");
  if (id <= 0) violation(path + "/event_id", "must be positive");
  e.event_id = static_cast<std::uint64_t>(id);
  e.t = require_int(j, path, "t");
  auto kind = event_kind_from_string(require_string(j, path, "kind"));
  if (!kind) violation(path + "/kind", "unknown kind");
  e.kind = *kind;
  e.actor = require_string(j, path, "actor");
  const json& p = require(j, path, "payload");
  const std::string pp = path + "/payload";
  if (is_speech(e.kind)) {
    only_keys(p, pp, {"text", "addressee", "overrides"});
    SpeechPayload sp;
    sp.text = require_string(p, pp, "text");
    if (sp.text.empty()) violation(pp + "/text", "empty utterance");
    if (auto it = p.find("addressee"); it != p.end() && !it->is_null()) {
      if (!it->is_string()) violation(pp + "/addressee", "expected string or null");
      sp.addressee = it->get<std::string>();
    }
    if (auto it = p.find("overrides"); it != p.end()) {
      if (!it->is_number_unsigned()) violation(pp + "/overrides", "expected event id");
      sp.overrides = it->get<std::uint64_t>();
    }
    e.payload = sp;
  } else if (e.kind == EventKind::kCharacterMovement) {
    only_keys(p, pp, {"from", "to"});
    e.payload = MovementPayload{vec3_from_json(require(p, pp, "from"), pp + "/from"),
                                vec3_from_json(require(p, pp, "to"), pp + "/to")};
  } else if (e.kind == EventKind::kCharacterObjectGrab) {
    only_keys(p, pp, {"prop", "hand"});
    ObjectGrabPayload og;
    og.prop = require_string(p, pp, "prop");
    std::string hand = require_string(p, pp, "hand");
    if (hand != "Left" && hand != "Right") violation(pp + "/hand", "expected Left or Right");
    og.hand = hand_from_string(hand);
    e.payload = og;
  } else {
    only_keys(p, pp, {});
    e.payload = NoPayload{};
  }
  return e;
}

/// Top-level keys the session document may carry next to the log proper.
inline constexpr std::string_view kSessionDocumentSections[] = {
    "scene", "config", "intent_frames", "marbles", "timeline", "status"};

inline nlohmann::json serialize_log(const SessionLog& log) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : log.events()) events.push_back(event_to_json(e));
  nlohmann::json counts = nlohmann::json::object();
  for (EventKind k : kAllEventKinds)
    counts[std::string(to_string(k))] = log.metadata().interaction_counts.at(k);
  const auto& md = log.metadata();
  return {{"schema_version", kSchemaVersion},
          {"session_id", log.session_id()},
          {"scene_id", log.scene_id()},
          {"created_at", log.created_at()},
          {"events", events},
          {"metadata",
           {{"duration_ms", md.duration_ms},
            {"export_time", md.export_time ? nlohmann::json(*md.export_time) : nlohmann::json()},
            {"interaction_counts", counts}}}};
}

inline SessionLog deserialize_log(const nlohmann::json& doc) {
  using namespace json_detail;
  if (!doc.is_object()) violation("", "expected object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static constexpr std::string_view core[] = {"schema_version", "session_id", "scene_id",
                                                "created_at",     "events",     "metadata"};
    bool known = std::find(std::begin(core), std::end(core), it.key()) != std::end(core) ||
                 std::find(std::begin(kSessionDocumentSections),
                           std::end(kSessionDocumentSections),
                           it.key()) != std::end(kSessionDocumentSections);
    if (!known) violation("/" + it.key(), "unknown field");
  }
  std::int64_t version = require_int(doc, "", "schema_version");
  if (version != kSchemaVersion) violation("/schema_version", "unsupported version");
  SessionLog log(require_string(doc, "", "session_id"), require_string(doc, "", "scene_id"),
                 require_string(doc, "", "created_at"));
  const json& events = require(doc, "", "events");
  if (!events.is_array()) violation("/events", "expected array");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string path = "/events/" + std::to_string(i);
    InteractionEvent e = event_from_json(events[i], path);
    try {
      log.append(std::move(e));
    } catch (const Error& err) {
      violation(path, err.what());
    }
  }
  const json& md = require(doc, "", "metadata");
  only_keys(md, "/metadata", {"duration_ms", "export_time", "interaction_counts"});
  Millis duration = require_int(md, "/metadata", "duration_ms");
  if (duration < log.last_t()) violation("/metadata/duration_ms", "shorter than the event span");
  log.extend_duration(duration);
  if (auto it = md.find("export_time"); it != md.end() && !it->is_null()) {
    if (!it->is_number_integer()) violation("/metadata/export_time", "expected integer or null");
    log.set_export_time(it->get<Millis>());
  }
  const json& counts = require(md, "/metadata", "interaction_counts");
  if (!counts.is_object()) violation("/metadata/interaction_counts", "expected object");
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    auto kind = event_kind_from_string(it.key());
    if (!kind) violation("/metadata/interaction_counts/" + it.key(), "unknown kind");
    if (!it->is_number_integer() ||
        it->get<int>() != log.metadata().interaction_counts.at(*kind)) {
      violation("/metadata/interaction_counts/" + it.key(), "does not match recount");
    }
  }
  for (EventKind k : kAllEventKinds) {
    if (!counts.contains(std::string(to_string(k))) &&
        log.metadata().interaction_counts.at(k) != 0) {
      violation("/metadata/interaction_counts/" + std::string(to_string(k)), "missing");
    }
  }
  return log;
}

}  // namespace stagebeat
