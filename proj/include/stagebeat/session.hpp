#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/agents.hpp"
#include "stagebeat/assembly.hpp"
#include "stagebeat/backend.hpp"
#include "stagebeat/config.hpp"
#include "stagebeat/dialogue.hpp"
#include "stagebeat/export.hpp"
#include "stagebeat/fusion.hpp"
#include "stagebeat/interaction_log.hpp"
#include "stagebeat/scene.hpp"
#include "stagebeat/scene_document.hpp"

namespace stagebeat {

enum class SessionStatus { kActive, kAssembling, kExported, kClosed };

inline std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kActive: return "Active";
    case SessionStatus::kAssembling: return "Assembling";
    case SessionStatus::kExported: return "Exported";
    case SessionStatus::kClosed: return "Closed";
  }
  return "?";
}

inline std::optional<SessionStatus> session_status_from_string(std::string_view s) {
  for (auto v : {SessionStatus::kActive, SessionStatus::kAssembling, SessionStatus::kExported,
                 SessionStatus::kClosed})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// A reply the session wants generated. The caller runs the backend (on
/// any thread) and hands the text back through Session::complete_reply.
struct ReplyTicket {
  PendingReply pending;
  GenerationRequest request;
};

inline nlohmann::json live_scene_to_json(const SceneState& s) {
  nlohmann::json chars = nlohmann::json::array(), props = nlohmann::json::array();
  for (const auto& c : s.characters)
    chars.push_back({{"id", c.id},
                     {"name", c.name},
                     {"position", vec3_to_json(c.position)},
                     {"facing", vec3_to_json(c.facing)},
                     {"held_prop", c.held_prop ? nlohmann::json(*c.held_prop) : nlohmann::json(nullptr)},
                     {"state", to_string(c.state)}});
  for (const auto& p : s.props) {
    nlohmann::json att = nullptr;
    if (p.attached_to)
      att = {{"character", p.attached_to->character}, {"hand", to_string(p.attached_to->hand)}};
    props.push_back({{"id", p.id}, {"name", p.name}, {"position", vec3_to_json(p.position)}, {"attached_to", att}});
  }
  return {{"clock", s.clock}, {"characters", chars}, {"props", props}};
}

inline nlohmann::json speech_message(const InteractionEvent& e) {
  const auto& sp = e.speech();
  return {{"type", "SpeechEvent"},
          {"event_id", e.event_id},
          {"t", e.t},
          {"kind", to_string(e.kind)},
          {"speaker", e.actor},
          {"addressee", sp.addressee ? nlohmann::json(*sp.addressee) : nlohmann::json(nullptr)},
          {"text", sp.text},
          {"overrides", sp.overrides ? nlohmann::json(*sp.overrides) : nlohmann::json(nullptr)}};
}

inline nlohmann::json error_message(std::optional<std::int64_t> seq, ErrorCode code,
                                    const std::string& detail) {
  return {{"type", "Error"},
          {"seq", seq ? nlohmann::json(*seq) : nlohmann::json(nullptr)},
          {"code", to_string(code)},
          {"detail", detail}};
}

/// One co-authoring session. Not thread-safe; one owner serializes calls.
///
/// The pipeline runs on a fixed logical grid (cfg.tick_ms). Each grid tick
/// emits fusion groups whose window has closed, scores and enqueues them,
/// then polls the commit queue. Events are processed after the grid has
/// caught up to their timestamp, so replaying a log reproduces every frame.
class Session {
 public:
  Session(std::string session_id, SceneFixture fixture, EngineConfig cfg = {},
          std::shared_ptr<GenerationBackend> backend = nullptr, std::string created_at = {})
      : fixture_(std::move(fixture)),
        cfg_(cfg),
        scene_(fixture_.scene),
        log_(std::move(session_id), fixture_.fixture_id, std::move(created_at)),
        env_(cfg_),
        social_(cfg_),
        filter_(cfg_.dedup_window_ms, cfg_.salience_floor),
        buffer_(cfg_.cooccurrence_window_ms),
        queue_(cfg_.n_commit, cfg_.t_commit_ms),
        weights_(cfg_.weights),
        offline_(fixture_.seed),
        backend_(std::move(backend)) {}

  // --- accessors ----------------------------------------------------------------------

  const std::string& id() const { return log_.session_id(); }
  SessionStatus status() const { return status_; }
  const SceneState& scene() const { return scene_; }
  const SceneFixture& fixture() const { return fixture_; }
  const EngineConfig& config() const { return cfg_; }
  const SessionLog& log() const { return log_; }
  const std::vector<IntentFeature>& features() const { return features_; }
  /// Every feature the agents produced, before the temporal filter.
  const std::vector<IntentFeature>& observed() const { return observed_; }
  const std::vector<IntentFrame>& frames() const { return frames_; }
  const Timeline& timeline() const { return timeline_; }
  const FusionWeights& weights() const { return weights_; }
  const TurnState& turn() const { return turn_; }
  std::size_t queued() const { return queue_.size(); }
  Millis now() const { return now_; }
  const NarratorAgent& narrator() const { return narrator_; }

  /// When false (replay), the session never asks for replies or proactive
  /// speech; logged AI lines are fed in as events instead.
  void set_generation(bool on) { generation_ = on; }
  /// When true, replies are generated inside the call that schedules them.
  void set_inline_generation(bool on) { inline_generation_ = on; }

  GenerationBackend& backend() { return backend_ ? *backend_ : offline_; }
  /// Shared handle for generating off the session's thread.
  std::shared_ptr<GenerationBackend> shared_backend() const {
    if (backend_) return backend_;
    return std::make_shared<DeterministicBackend>(fixture_.seed);
  }

  // --- clock ---------------------------------------------------------------------------

  /// Advances logical time to `t`, running every grid tick on the way and
  /// checking for proactive speech. Returns outbound messages.
  std::vector<nlohmann::json> tick(Millis t) {
    if (status_ != SessionStatus::kActive) throw Error(ErrorCode::kWrongPhase, std::string(to_string(status_)));
    advance_to(t);
    return take_outbox();
  }

  // --- interaction -----------------------------------------------------------------------

  std::vector<nlohmann::json> grab(const std::string& character, Millis t) {
    require_active();
    advance_to(t);
    record(grab_character(scene_, character, t));
    return take_outbox();
  }

  std::vector<nlohmann::json> release(const std::string& character, Millis t) {
    require_active();
    advance_to(t);
    record(release_character(scene_, character, t));
    return take_outbox();
  }

  std::vector<nlohmann::json> move(const std::string& character, Vec3 target, Millis t) {
    require_active();
    advance_to(t);
    record(move_character(scene_, character, target, t));
    return take_outbox();
  }

  std::vector<nlohmann::json> attach(const std::string& prop, const std::string& character, Hand hand,
                                     Millis t) {
    require_active();
    advance_to(t);
    record(attach_prop(scene_, prop, character, hand, t));
    return take_outbox();
  }

  /// User speech through the held character. Schedules one reactive reply
  /// from the addressee unless the addressee is held.
  std::vector<nlohmann::json> speak(const std::string& character, const std::string& line, Millis t) {
    require_active();
    advance_to(t);
    InteractionEvent ev = user_speak(scene_, log_, character, line, t);
    const InteractionEvent& stored = process(ev);
    const auto& to = stored.speech().addressee;
    if (generation_ && to && !turn_.pending_reply) {
      const Character& a = scene_.character(*to);
      if (a.state != CharacterState::kHeldByUser) {
        turn_.pending_reply = PendingReply{*to, stored.actor, stored.event_id, t, stored.event_id,
                                           EventKind::kAIReactiveSpeech};
        if (inline_generation_) run_pending(t);
      }
    }
    return take_outbox();
  }

  /// Feeds a logged event through the pipeline as-is (replay, restore).
  std::vector<nlohmann::json> replay_event(const InteractionEvent& ev) {
    require_active();
    advance_to(ev.t);
    process(ev);
    return take_outbox();
  }

  // --- replies -----------------------------------------------------------------------------

  /// Hands out the pending reply for asynchronous generation. Nullopt when
  /// nothing is pending or a reply is already in flight.
  std::optional<ReplyTicket> take_reply_ticket() {
    if (!turn_.pending_reply || turn_.ai_speaking || status_ != SessionStatus::kActive) return std::nullopt;
    try {
      ReplyTicket ticket{*turn_.pending_reply, request_for(*turn_.pending_reply)};
      turn_.ai_speaking = true;
      return ticket;
    } catch (const Error& e) {
      turn_.pending_reply.reset();
      outbox_.push_back(error_message(std::nullopt, e.code(), e.detail()));
      return std::nullopt;
    }
  }

  /// Applies a finished reply at time `t`. A reply whose speaker was picked
  /// up after the request, or that arrives after play ended, is dropped.
  /// `text` empty means the backend failed.
  std::vector<nlohmann::json> complete_reply(const ReplyTicket& ticket, const std::string& text, Millis t) {
    if (!turn_.pending_reply || turn_.pending_reply->cue_event != ticket.pending.cue_event ||
        turn_.pending_reply->kind != ticket.pending.kind)
      return take_outbox();
    turn_.pending_reply.reset();
    turn_.ai_speaking = false;
    if (status_ != SessionStatus::kActive) return take_outbox();
    advance_to(std::max(t, scene_.clock));
    if (text.empty()) {
      outbox_.push_back(error_message(std::nullopt, ErrorCode::kBackendFailure, "no reply generated"));
      return take_outbox();
    }
    if (reply_is_stale(log_, ticket.pending) ||
        scene_.character(ticket.pending.speaker).state == CharacterState::kHeldByUser) {
      ++discarded_replies_;
      return take_outbox();
    }
    InteractionEvent ev{0, std::max(t, scene_.clock), ticket.pending.kind, ticket.pending.speaker,
                        SpeechPayload{text::trim(text), ticket.pending.addressee, std::nullopt}};
    if (ev.speech().text.empty()) return take_outbox();
    process(ev);
    if (ticket.pending.kind == EventKind::kAIProactiveSpeech) turn_.last_input_t = ev.t;
    return take_outbox();
  }

  std::size_t discarded_replies() const { return discarded_replies_; }

  // --- phases -------------------------------------------------------------------------------

  /// Ends play at `t`: runs the grid to `t`, flushes open fusion groups and
  /// the commit queue, and moves to Assembling.
  std::vector<nlohmann::json> end_play(Millis t) {
    require_active();
    advance_to(t);
    log_.extend_duration(t);
    for (auto& c : buffer_.flush()) enqueue(std::move(c), now_);
    if (auto f = queue_.flush()) commit(std::move(*f));
    turn_.pending_reply.reset();
    turn_.ai_speaking = false;
    status_ = SessionStatus::kAssembling;
    outbox_.push_back(timeline_message());
    return take_outbox();
  }

  std::vector<nlohmann::json> reorder(std::uint64_t marble, std::size_t position) {
    require(SessionStatus::kAssembling);
    timeline_.reorder(marble, position);
    outbox_.push_back(timeline_message());
    return take_outbox();
  }

  std::vector<nlohmann::json> remove(std::uint64_t marble) {
    require(SessionStatus::kAssembling);
    timeline_.remove(marble);
    outbox_.push_back(timeline_message());
    return take_outbox();
  }

  std::vector<nlohmann::json> undo() {
    require(SessionStatus::kAssembling);
    timeline_.undo();
    outbox_.push_back(timeline_message());
    return take_outbox();
  }

  MarbleReplay replay_marble(std::uint64_t marble) const {
    if (status_ != SessionStatus::kAssembling && status_ != SessionStatus::kExported)
      throw Error(ErrorCode::kWrongPhase, std::string(to_string(status_)));
    return replay(timeline_, marble, log_);
  }

  ExportBundle bundle() const { return make_export_bundle(timeline_, log_, fixture_, scene_); }

  /// Builds the requested artifacts and moves to Exported.
  nlohmann::json export_artifacts(std::optional<ExportFormat> format = std::nullopt) {
    if (status_ != SessionStatus::kAssembling && status_ != SessionStatus::kExported)
      throw Error(ErrorCode::kWrongPhase, std::string(to_string(status_)));
    log_.set_export_time(log_.metadata().duration_ms);
    ExportBundle b = bundle();
    nlohmann::json out = {{"type", "ExportResult"},
                          {"format", format ? nlohmann::json(to_string(*format)) : nlohmann::json("Both")}};
    if (!format || *format == ExportFormat::kSummary) out["synopsis"] = export_summary(b, backend());
    if (!format || *format == ExportFormat::kScreenplay) {
      Screenplay sp = export_screenplay(b);
      out["screenplay"] = render_fountain(sp);
      out["screenplay_doc"] = screenplay_to_json(sp);
    }
    out["continuity"] = continuity_to_json(continuity_notes(b));
    out["metadata"] = metadata_to_json(log_.metadata());
    status_ = SessionStatus::kExported;
    return out;
  }

  void close() {
    if (status_ == SessionStatus::kClosed) throw Error(ErrorCode::kWrongPhase, "Closed");
    status_ = SessionStatus::kClosed;
  }

  nlohmann::json timeline_message() const {
    nlohmann::json order = nlohmann::json::array();
    for (auto id : timeline_.order()) order.push_back(id);
    return {{"type", "TimelineState"},
            {"status", to_string(status_)},
            {"order", order},
            {"undo_depth", timeline_.undo_depth()},
            {"marbles", timeline_to_json(timeline_)}};
  }

  // --- wire protocol ----------------------------------------------------------------------

  /// Applies one client envelope and returns the server messages it caused,
  /// ending with Ack(seq) on success or a single Error otherwise.
  std::vector<nlohmann::json> ingest(const nlohmann::json& msg) {
    std::optional<std::int64_t> seq;
    try {
      if (!msg.is_object()) throw Error(ErrorCode::kSchemaViolation, "/: expected object");
      if (!msg.contains("seq") || !msg["seq"].is_number_integer())
        throw Error(ErrorCode::kSchemaViolation, "/seq: expected integer");
      seq = msg["seq"].get<std::int64_t>();
      if (last_seq_ && *seq <= *last_seq_)
        throw Error(ErrorCode::kOutOfOrder, std::to_string(*seq) + " after " + std::to_string(*last_seq_));
      auto out = dispatch(msg);
      last_seq_ = seq;
      out.push_back({{"type", "Ack"}, {"seq", *seq}});
      return out;
    } catch (const Error& e) {
      outbox_.clear();
      if (e.code() != ErrorCode::kOutOfOrder && seq) last_seq_ = seq;
      return {error_message(seq, e.code(), e.detail())};
    }
  }

  std::optional<std::int64_t> last_seq() const { return last_seq_; }

  // --- persistence --------------------------------------------------------------------------

  /// Full session document: the log plus scene, config, derived frames and
  /// marbles, the timeline order and the phase.
  nlohmann::json document() const {
    nlohmann::json doc = serialize_log(log_);
    doc["scene"] = fixture_to_json(fixture_);
    doc["config"] = config_to_json(cfg_);
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : frames_) frames.push_back(frame_to_json(f));
    doc["intent_frames"] = frames;
    doc["marbles"] = timeline_to_json(timeline_);
    nlohmann::json order = nlohmann::json::array();
    for (auto id : timeline_.order()) order.push_back(id);
    doc["timeline"] = order;
    doc["status"] = to_string(status_);
    return doc;
  }

  /// Rebuilds a session from its document by replaying the log. Frame
  /// classifications stored in the document are reused so sessions that
  /// ran against a remote backend restore exactly.
  static std::unique_ptr<Session> restore(const nlohmann::json& doc,
                                          std::optional<EngineConfig> cfg_override = std::nullopt,
                                          std::shared_ptr<GenerationBackend> backend = nullptr) {
    SessionLog log = deserialize_log(doc);
    if (!doc.contains("scene")) throw Error(ErrorCode::kSchemaViolation, "/scene: missing");
    SceneFixture fixture = fixture_from_json(doc["scene"], "/scene");
    EngineConfig cfg;
    if (cfg_override) cfg = *cfg_override;
    else if (doc.contains("config")) {
      try {
        cfg = config_from_json(doc["config"]);
      } catch (const Error& e) {
        throw Error(ErrorCode::kSchemaViolation, "/config" + e.detail());
      }
    }
    auto s = std::make_unique<Session>(log.session_id(), fixture, cfg, std::move(backend), log.created_at());
    s->set_generation(false);
    if (doc.contains("intent_frames") && !cfg_override) s->remember_classifications(doc["intent_frames"]);
    for (std::size_t i = 0; i < log.events().size(); ++i) {
      try {
        s->replay_event(log.events()[i]);
      } catch (const Error& e) {
        throw Error(ErrorCode::kSchemaViolation, "/events/" + std::to_string(i) + ": " + e.what());
      }
    }
    SessionStatus status = SessionStatus::kAssembling;
    if (doc.contains("status")) {
      if (!doc["status"].is_string()) throw Error(ErrorCode::kSchemaViolation, "/status: expected string");
      auto st = session_status_from_string(doc["status"].get<std::string>());
      if (!st) throw Error(ErrorCode::kSchemaViolation, "/status: unknown phase");
      status = *st;
    }
    const Millis duration = log.metadata().duration_ms;
    if (status == SessionStatus::kActive) {
      s->advance_to(duration);
      s->log_.extend_duration(duration);
    } else {
      s->end_play(duration);
      if (doc.contains("timeline")) {
        const auto& t = doc["timeline"];
        if (!t.is_array()) throw Error(ErrorCode::kSchemaViolation, "/timeline: expected array");
        std::vector<std::uint64_t> ids;
        for (std::size_t i = 0; i < t.size(); ++i) {
          if (!t[i].is_number_unsigned())
            throw Error(ErrorCode::kSchemaViolation, "/timeline/" + std::to_string(i) + ": expected marble id");
          ids.push_back(t[i].get<std::uint64_t>());
        }
        try {
          s->timeline_.set_order(ids);
        } catch (const Error& e) {
          throw Error(ErrorCode::kSchemaViolation, "/timeline: " + e.detail());
        }
      }
      s->status_ = status;
    }
    if (auto t = log.metadata().export_time) s->log_.set_export_time(*t);
    s->set_generation(true);
    s->take_outbox();
    return s;
  }

 private:
  void require_active() const { require(SessionStatus::kActive); }
  void require(SessionStatus s) const {
    if (status_ != s) throw Error(ErrorCode::kWrongPhase, std::string(to_string(status_)));
  }

  std::vector<nlohmann::json> take_outbox() {
    std::vector<nlohmann::json> out;
    out.swap(outbox_);
    return out;
  }

  // Runs grid ticks in (last_tick_, t], then the proactive check at t.
  void advance_to(Millis t) {
    if (t < now_) throw Error(ErrorCode::kNonMonotonicTimestamp, "t=" + std::to_string(t) + " before " + std::to_string(now_));
    const Millis step = std::max<Millis>(cfg_.tick_ms, 1);
    for (Millis g = (last_tick_ / step + 1) * step; g <= t; g += step) {
      last_tick_ = g;
      now_ = g;
      pipeline_tick(g);
      proactive_check(g);
    }
    now_ = t;
    proactive_check(t);
  }

  void pipeline_tick(Millis g) {
    for (auto& c : buffer_.emit_due(g)) enqueue(std::move(c), g);
    if (auto f = queue_.poll(g)) commit(std::move(*f));
  }

  void enqueue(RankedCandidate c, Millis now) {
    c.r = score(c, weights_);
    if (auto f = queue_.enqueue(std::move(c), now)) commit(std::move(*f));
  }

  void proactive_check(Millis t) {
    if (!generation_ || status_ != SessionStatus::kActive) return;
    if (turn_.pending_reply || turn_.ai_speaking) return;
    if (t - turn_.last_input_t < cfg_.proactive_ms) return;
    auto speaker = proactive_speaker(scene_, log_);
    if (!speaker) return;
    auto addressee = proactive_addressee(scene_, *speaker);
    if (!addressee) return;
    const std::uint64_t newest = log_.empty() ? 0 : log_.events().back().event_id;
    turn_.pending_reply = PendingReply{*speaker, *addressee, 0, t, newest, EventKind::kAIProactiveSpeech};
    // Reset now so a slow backend cannot trigger a second nudge.
    turn_.last_input_t = t;
    if (inline_generation_) run_pending(t);
  }

  void run_pending(Millis t) {
    auto ticket = take_reply_ticket();
    if (!ticket) return;
    std::string reply;
    try {
      reply = backend().generate(ticket->request);
    } catch (const Error& e) {
      outbox_.push_back(error_message(std::nullopt, e.code(), e.detail()));
    }
    auto msgs = complete_reply(*ticket, reply, t);
    outbox_.insert(outbox_.end(), msgs.begin(), msgs.end());
  }

  GenerationRequest request_for(const PendingReply& p) const {
    PromptInputs in;
    in.scene = &scene_;
    in.roles = &fixture_.roles;
    in.log = &log_;
    for (const auto& f : frames_) in.story_so_far.push_back(f.summary);
    in.speaker = p.speaker;
    in.addressee = p.addressee;
    in.cue_event = p.cue_event;
    in.now = now_;
    in.budget = cfg_.token_budget;
    return assemble_prompt(in);
  }

  void record(Applied a) {
    (void)a.scene;
    process(a.event);
  }

  /// Applies, logs and observes one event.
  const InteractionEvent& process(const InteractionEvent& ev_in) {
    SceneState before = scene_;
    SceneState after = apply_event(scene_, ev_in);
    const InteractionEvent& ev = log_.append(ev_in);
    scene_ = std::move(after);
    history_.emplace_back(ev.t, scene_);
    if (is_user_input(ev.kind)) turn_.last_input_t = ev.t;

    std::vector<IntentFeature> fresh = env_.observe(before, scene_, ev);
    auto social = social_.observe(before, scene_, ev);
    fresh.insert(fresh.end(), social.begin(), social.end());
    if (is_speech(ev.kind)) {
      try {
        auto nr = narrator_.observe(scene_, fixture_.roles, ev, backend());
        fresh.insert(fresh.end(), nr.features.begin(), nr.features.end());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kBackendFailure) throw;
        auto nr = narrator_.observe(scene_, fixture_.roles, ev, offline_);
        fresh.insert(fresh.end(), nr.features.begin(), nr.features.end());
        outbox_.push_back(error_message(std::nullopt, e.code(), e.detail()));
      }
    }
    for (auto& f : fresh) {
      f.feature_id = next_feature_id_++;
      observed_.push_back(f);
      if (!filter_.admit(f)) continue;
      features_.push_back(f);
      buffer_.add(f);
    }

    if (is_speech(ev.kind)) {
      outbox_.push_back(speech_message(ev));
    } else {
      nlohmann::json delta = {{"type", "SceneDelta"}, {"t", ev.t}, {"event_id", ev.event_id},
                              {"kind", to_string(ev.kind)}, {"scene", live_scene_to_json(scene_)}};
      outbox_.push_back(std::move(delta));
    }
    return ev;
  }

  const SceneState& scene_at(Millis t) const {
    const SceneState* best = &fixture_.scene;
    for (const auto& [ht, s] : history_) {
      if (ht > t) break;
      best = &s;
    }
    return *best;
  }

  void remember_classifications(const nlohmann::json& frames) {
    if (!frames.is_array()) throw Error(ErrorCode::kSchemaViolation, "/intent_frames: expected array");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      const std::string p = "/intent_frames/" + std::to_string(i);
      try {
        FrameClassification c;
        c.summary = f.at("summary").get<std::string>();
        c.tone = f.at("tone").get<std::string>();
        c.function = f.at("function").get<std::string>();
        c.tension = f.at("tension").get<int>();
        auto type = intent_type_from_string(f.at("intent_type").get<std::string>());
        if (!type || c.tension < 1 || c.tension > 10) throw Error(ErrorCode::kSchemaViolation, p);
        c.intent_type = *type;
        stored_classes_[f.at("frame_id").get<std::uint64_t>()] = c;
      } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::kSchemaViolation, p + ": malformed frame");
      }
    }
  }

  void commit(IntentFrame frame) {
    std::vector<std::string> people;
    for (const auto& id : frame.characters)
      if (scene_.find_character(id)) people.push_back(id);
    frame.characters = people;

    FrameContext ctx;
    ctx.scene = &scene_at(frame.t_end);
    ctx.roles = &fixture_.roles;
    for (auto& l : dialogue_history(log_, frame.t_end))
      if (!l.overridden && l.t >= frame.t_start) ctx.dialogue.push_back(std::move(l));
    ctx.arc.progress = static_cast<double>(frame.t_end) / static_cast<double>(std::max<Millis>(cfg_.session_length_ms, 1));
    if (!frames_.empty()) ctx.arc.previous_tension = frames_.back().tension;
    ctx.arc.climax_seen = std::any_of(frames_.begin(), frames_.end(),
                                      [](const IntentFrame& f) { return f.intent_type == IntentType::kClimax; });

    FrameClassification c;
    if (auto it = stored_classes_.find(frame.frame_id); it != stored_classes_.end()) {
      c = it->second;
    } else {
      try {
        c = classify_frame(frame, ctx, backend(), offline_);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kBackendFailure) throw;
        c = classify_frame(frame, ctx, offline_, offline_);
        outbox_.push_back(error_message(std::nullopt, e.code(), e.detail()));
      }
    }
    frame.summary = c.summary;
    frame.tone = c.tone;
    frame.function = c.function;
    frame.tension = c.tension;
    frame.intent_type = c.intent_type;
    frames_.push_back(frame);
    weights_ = adjust_weights(weights_, frames_, cfg_);

    std::vector<IntentFeature> members;
    for (const auto& f : features_)
      if (std::binary_search(frame.source_features.begin(), frame.source_features.end(), f.feature_id))
        members.push_back(f);
    StoryMarble m = spawn_marble(frame, *ctx.scene, log_, members);
    std::uint64_t id = timeline_.add(std::move(m));
    outbox_.push_back({{"type", "MarbleSpawned"},
                       {"marble", marble_to_json(timeline_.marble(id), timeline_.position_of(id))},
                       {"frame", frame_to_json(frame)}});
  }

  std::vector<nlohmann::json> dispatch(const nlohmann::json& msg) {
    using json_detail::require_string;
    if (!msg.contains("type") || !msg["type"].is_string())
      throw Error(ErrorCode::kSchemaViolation, "/type: expected string");
    const std::string type = msg["type"].get<std::string>();
    auto time = [&]() -> Millis {
      if (!msg.contains("t") || !msg["t"].is_number_integer())
        throw Error(ErrorCode::kSchemaViolation, "/t: expected integer");
      return msg["t"].get<Millis>();
    };
    auto marble_id = [&]() -> std::uint64_t {
      if (!msg.contains("marble_id") || !msg["marble_id"].is_number_unsigned())
        throw Error(ErrorCode::kSchemaViolation, "/marble_id: expected non-negative integer");
      return msg["marble_id"].get<std::uint64_t>();
    };
    static const std::set<std::string> kInteraction = {"Grab", "Release", "Move", "Attach", "Speak", "EndPlay", "Tick"};
    if (kInteraction.count(type)) require_active();

    if (type == "Grab") return grab(require_string(msg, "", "character"), time());
    if (type == "Release") return release(require_string(msg, "", "character"), time());
    if (type == "Move") {
      if (!msg.contains("target")) throw Error(ErrorCode::kSchemaViolation, "/target: missing");
      return move(require_string(msg, "", "character"), vec3_from_json(msg["target"], "/target"), time());
    }
    if (type == "Attach") {
      std::string hand = msg.contains("hand") ? require_string(msg, "", "hand") : "Right";
      if (hand != "Left" && hand != "Right") throw Error(ErrorCode::kSchemaViolation, "/hand: expected Left or Right");
      return attach(require_string(msg, "", "prop"), require_string(msg, "", "character"),
                    hand_from_string(hand), time());
    }
    if (type == "Speak") return speak(require_string(msg, "", "character"), require_string(msg, "", "text"), time());
    if (type == "EndPlay") return end_play(time());
    if (type == "Tick") return tick(time());
    if (type == "Reorder") {
      if (!msg.contains("position") || !msg["position"].is_number_unsigned())
        throw Error(ErrorCode::kSchemaViolation, "/position: expected non-negative integer");
      return reorder(marble_id(), msg["position"].get<std::size_t>());
    }
    if (type == "Delete") return remove(marble_id());
    if (type == "Undo") return undo();
    if (type == "ReplayMarble") {
      std::uint64_t id = marble_id();
      MarbleReplay r = replay_marble(id);
      nlohmann::json dialogue = nlohmann::json::array();
      for (const auto& l : r.dialogue)
        dialogue.push_back({{"event_id", l.event_id}, {"t", l.t}, {"speaker", l.speaker},
                            {"text", l.text}, {"kind", to_string(l.kind)}, {"overridden", l.overridden}});
      return {{{"type", "SceneDelta"}, {"ghost", true}, {"marble_id", id},
               {"snapshot", snapshot_to_json(r.snapshot)}, {"dialogue", dialogue}}};
    }
    if (type == "Export") {
      std::optional<ExportFormat> format;
      if (msg.contains("format")) {
        std::string f = require_string(msg, "", "format");
        if (f == "Summary") format = ExportFormat::kSummary;
        else if (f == "Screenplay") format = ExportFormat::kScreenplay;
        else if (f != "Both") throw Error(ErrorCode::kSchemaViolation, "/format: expected Summary, Screenplay or Both");
      }
      return {export_artifacts(format)};
    }
    throw Error(ErrorCode::kSchemaViolation, "/type: unknown message type " + type);
  }

  SceneFixture fixture_;
  EngineConfig cfg_;
  SceneState scene_;
  SessionLog log_;
  std::vector<std::pair<Millis, SceneState>> history_;

  EnvironmentAgent env_;
  SocialAgent social_;
  NarratorAgent narrator_;
  TemporalFilter filter_;
  FusionBuffer buffer_;
  CommitQueue queue_;
  FusionWeights weights_;
  std::uint64_t next_feature_id_ = 1;
  std::vector<IntentFeature> observed_;
  std::vector<IntentFeature> features_;
  std::vector<IntentFrame> frames_;
  std::map<std::uint64_t, FrameClassification> stored_classes_;
  Timeline timeline_;

  TurnState turn_;
  Millis now_ = 0;
  Millis last_tick_ = 0;
  SessionStatus status_ = SessionStatus::kActive;
  std::optional<std::int64_t> last_seq_;
  bool generation_ = true;
  bool inline_generation_ = true;
  std::size_t discarded_replies_ = 0;

  DeterministicBackend offline_;
  std::shared_ptr<GenerationBackend> backend_;
  std::vector<nlohmann::json> outbox_;
};

}  // namespace stagebeat
