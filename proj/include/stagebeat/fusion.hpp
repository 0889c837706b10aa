#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/backend.hpp"
#include "stagebeat/config.hpp"
#include "stagebeat/features.hpp"
#include "stagebeat/interaction_log.hpp"
#include "stagebeat/narrative_rules.hpp"
#include "stagebeat/prompt_templates.hpp"
#include "stagebeat/scene.hpp"

namespace stagebeat {

// --- temporal filtering -------------------------------------------------------

/// Streaming form of temporal_filter(). Drops features below the salience
/// floor and repeats of (actor, label, target) within `window` of the last
/// kept one.
class TemporalFilter {
 public:
  explicit TemporalFilter(Millis window = 500, double floor = 0.1)
      : window_(window), floor_(floor) {}

  bool admit(const IntentFeature& f) {
    if (f.salience < floor_) return false;
    auto key = std::make_tuple(f.actor, f.label, f.target.value_or(""));
    auto it = last_kept_.find(key);
    if (it != last_kept_.end() && f.t - it->second <= window_) return false;
    last_kept_[key] = f.t;
    return true;
  }

 private:
  Millis window_;
  double floor_;
  std::map<std::tuple<std::string, std::string, std::string>, Millis> last_kept_;
};

inline std::vector<IntentFeature> temporal_filter(const std::vector<IntentFeature>& features,
                                                  Millis window = 500, double floor = 0.1) {
  TemporalFilter filter(window, floor);
  std::vector<IntentFeature> out;
  for (const auto& f : features)
    if (filter.admit(f)) out.push_back(f);
  return out;
}

// --- candidates ---------------------------------------------------------------

struct RankedCandidate {
  std::vector<IntentFeature> features;
  double e = 0.0;
  double s = 0.0;
  double n = 0.0;
  double r = 0.0;
  Millis first_t = 0;
  Millis last_t = 0;
  std::string description;
  /// Actor of the most salient member; the candidate's protagonist.
  std::string lead_actor;
  std::optional<std::string> lead_target;
};

inline double score(double e, double s, double n, const FusionWeights& w) {
  return w.w_e * e + w.w_s * s + w.w_n * n;
}

inline double score(const RankedCandidate& c, const FusionWeights& w) {
  return score(c.e, c.s, c.n, w);
}

namespace fusion_detail {

inline std::string pair_key(const std::string& a, const std::optional<std::string>& b) {
  std::string x = a, y = b.value_or("");
  if (y < x) std::swap(x, y);
  return x + '\x1f' + y;
}

/// Highest-salience member satisfying `pred`; earliest wins ties.
template <class Pred>
const IntentFeature* top(const std::vector<IntentFeature>& fs, Pred pred) {
  const IntentFeature* best = nullptr;
  for (const auto& f : fs)
    if (pred(f) && (!best || f.salience > best->salience)) best = &f;
  return best;
}

}  // namespace fusion_detail

/// Fills in component maxima, description and lead of a feature group.
inline RankedCandidate summarize_group(std::vector<IntentFeature> features) {
  RankedCandidate c;
  c.features = std::move(features);
  if (c.features.empty()) return c;
  c.first_t = c.features.front().t;
  c.last_t = c.features.front().t;
  for (const auto& f : c.features) {
    c.e = std::max(c.e, f.environmental());
    c.s = std::max(c.s, f.social());
    c.n = std::max(c.n, f.narrative());
    c.first_t = std::min(c.first_t, f.t);
    c.last_t = std::max(c.last_t, f.t);
  }
  const auto* env = fusion_detail::top(c.features, [](const auto& f) {
    return f.agent == Agent::kEnvironment;
  });
  const auto* soc = fusion_detail::top(c.features, [](const auto& f) {
    return f.agent == Agent::kSocial;
  });
  const auto* nar = fusion_detail::top(c.features, [](const auto& f) {
    return f.agent == Agent::kNarrator;
  });
  const IntentFeature* other = soc;
  if (!other || (nar && nar->salience > soc->salience)) other = nar;
  if (env && other) c.description = env->label + " with " + other->label;
  else if (env) c.description = env->label;
  else c.description = other->label;
  const IntentFeature* lead = fusion_detail::top(c.features, [](const auto&) { return true; });
  c.lead_actor = lead->actor;
  c.lead_target = lead->target;
  return c;
}

/// Groups co-occurring features. A feature joins the oldest open group
/// whose first member is less than `window` older and which shares an actor
/// or the same unordered actor/target pair; otherwise it opens a group.
class FusionBuffer {
 public:
  explicit FusionBuffer(Millis window = 1000) : window_(window) {}

  void add(const IntentFeature& f) {
    for (auto& g : open_) {
      if (f.t - g.first_t >= window_) continue;
      if (g.actors.count(f.actor) || g.pairs.count(fusion_detail::pair_key(f.actor, f.target))) {
        g.add(f);
        return;
      }
    }
    Group g;
    g.first_t = f.t;
    g.add(f);
    open_.push_back(std::move(g));
  }

  /// Groups whose window has closed by `now`, oldest first.
  std::vector<RankedCandidate> emit_due(Millis now) {
    std::vector<RankedCandidate> out;
    std::vector<Group> keep;
    for (auto& g : open_) {
      if (now - g.first_t >= window_) out.push_back(summarize_group(std::move(g.features)));
      else keep.push_back(std::move(g));
    }
    open_ = std::move(keep);
    return out;
  }

  std::vector<RankedCandidate> flush() {
    std::vector<RankedCandidate> out;
    for (auto& g : open_) out.push_back(summarize_group(std::move(g.features)));
    open_.clear();
    return out;
  }

  bool empty() const { return open_.empty(); }
  std::size_t open_groups() const { return open_.size(); }

 private:
  struct Group {
    Millis first_t = 0;
    std::vector<IntentFeature> features;
    std::set<std::string> actors;
    std::set<std::string> pairs;
    void add(const IntentFeature& f) {
      features.push_back(f);
      actors.insert(f.actor);
      pairs.insert(fusion_detail::pair_key(f.actor, f.target));
    }
  };
  Millis window_;
  std::vector<Group> open_;
};

/// Batch form: groups a time-ordered feature list.
inline std::vector<RankedCandidate> fuse(const std::vector<IntentFeature>& features,
                                         Millis window = 1000) {
  FusionBuffer buf(window);
  for (const auto& f : features) buf.add(f);
  return buf.flush();
}

// --- frames --------------------------------------------------------------------

struct FrameAction {
  std::string description;
  std::string actor;
  std::optional<std::string> target;
  double e = 0.0;
  double s = 0.0;
  double n = 0.0;
  double r = 0.0;
  Millis first_t = 0;
  Millis last_t = 0;
  std::vector<std::string> labels;
  std::vector<std::uint64_t> feature_ids;
  friend bool operator==(const FrameAction&, const FrameAction&) = default;
};

struct IntentFrame {
  std::uint64_t frame_id = 0;
  std::vector<FrameAction> actions;
  std::vector<std::string> characters;
  Millis t_start = 0;
  Millis t_end = 0;
  int tension = 1;
  IntentType intent_type = IntentType::kRisingAction;
  std::string summary;
  std::string tone;
  std::string function;
  std::vector<std::uint64_t> source_features;
  friend bool operator==(const IntentFrame&, const IntentFrame&) = default;
};

inline nlohmann::json frame_to_json(const IntentFrame& f) {
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& a : f.actions) {
    actions.push_back({{"description", a.description},
                       {"actor", a.actor},
                       {"target", a.target ? nlohmann::json(*a.target) : nlohmann::json(nullptr)},
                       {"E", a.e},
                       {"S", a.s},
                       {"N", a.n},
                       {"R", a.r},
                       {"first_t", a.first_t},
                       {"last_t", a.last_t},
                       {"labels", a.labels},
                       {"feature_ids", a.feature_ids}});
  }
  return {{"frame_id", f.frame_id},
          {"actions", actions},
          {"characters", f.characters},
          {"t_start", f.t_start},
          {"t_end", f.t_end},
          {"tension", f.tension},
          {"intent_type", to_string(f.intent_type)},
          {"summary", f.summary},
          {"tone", f.tone},
          {"function", f.function},
          {"source_features", f.source_features}};
}

// --- weights -------------------------------------------------------------------

inline FusionWeights normalized(FusionWeights w) {
  double s = w.sum();
  if (s <= 0.0) return {};
  return {w.w_e / s, w.w_s / s, w.w_n / s};
}

/// Renormalizes to sum 1 while keeping every weight at least `floor`.
inline FusionWeights normalized_with_floor(FusionWeights w, double floor) {
  w = normalized(w);
  if (floor <= 0.0) return w;
  double* ws[3] = {&w.w_e, &w.w_s, &w.w_n};
  bool pinned[3] = {false, false, false};
  for (int pass = 0; pass < 3; ++pass) {
    double free_mass = 1.0, free_sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      if (!pinned[i] && *ws[i] < floor) pinned[i] = true;
      if (pinned[i]) free_mass -= floor;
      else free_sum += *ws[i];
    }
    for (int i = 0; i < 3; ++i) {
      if (pinned[i]) *ws[i] = floor;
      else if (free_sum > 0.0) *ws[i] = *ws[i] / free_sum * free_mass;
    }
  }
  return w;
}

inline bool environment_dominant(const IntentFrame& f) {
  double e = 0, s = 0, n = 0;
  for (const auto& a : f.actions) {
    e += a.e;
    s += a.s;
    n += a.n;
  }
  return e > s && e > n;
}

/// Runtime reweighting from the most recent frames (newest last). Both
/// multipliers apply before a single renormalization.
inline FusionWeights adjust_weights(const FusionWeights& w, const std::vector<IntentFrame>& history,
                                    const EngineConfig& cfg = {}) {
  if (history.empty()) return w;
  std::size_t from = history.size() > cfg.weight_history ? history.size() - cfg.weight_history : 0;
  std::size_t n = history.size() - from, dominant = 0;
  for (std::size_t i = from; i < history.size(); ++i) dominant += environment_dominant(history[i]);
  bool down = dominant * 2 > n;
  bool up = std::any_of(history.back().actions.begin(), history.back().actions.end(),
                        [&](const FrameAction& a) { return a.s >= cfg.social_novel; });
  if (!down && !up) return w;
  FusionWeights next = w;
  if (down) next.w_e *= cfg.env_down_multiplier;
  if (up) next.w_s *= cfg.social_up_multiplier;
  return normalized_with_floor(next, cfg.min_weight);
}

// --- commit queue --------------------------------------------------------------

/// Max-priority queue on R with FIFO tie-break. Commits when it holds
/// `capacity` candidates or its oldest entry is `timeout` old.
class CommitQueue {
 public:
  explicit CommitQueue(int capacity = 5, Millis timeout = 1000)
      : capacity_(static_cast<std::size_t>(std::max(capacity, 1))), timeout_(timeout) {}

  /// Adds a scored candidate and commits if a threshold is met.
  std::optional<IntentFrame> enqueue(RankedCandidate c, Millis now) {
    if (heap_.empty()) oldest_ = now;
    heap_.push(Entry{std::move(c), seq_++});
    if (heap_.size() >= capacity_ || now - *oldest_ >= timeout_) return drain();
    return std::nullopt;
  }

  /// Timeout check without a new candidate.
  std::optional<IntentFrame> poll(Millis now) {
    if (heap_.empty() || now - *oldest_ < timeout_) return std::nullopt;
    return drain();
  }

  /// Commits whatever is queued (end of play).
  std::optional<IntentFrame> flush() {
    if (heap_.empty()) return std::nullopt;
    return drain();
  }

  std::size_t size() const { return heap_.size(); }
  std::optional<Millis> oldest_enqueue() const { return oldest_; }
  std::uint64_t next_frame_id() const { return next_frame_id_; }
  void set_next_frame_id(std::uint64_t id) { next_frame_id_ = id; }

 private:
  struct Entry {
    RankedCandidate c;
    std::uint64_t seq;
  };
  struct Lower {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.c.r != b.c.r) return a.c.r < b.c.r;
      return a.seq > b.seq;
    }
  };

  IntentFrame drain() {
    IntentFrame f;
    f.frame_id = next_frame_id_++;
    bool first = true;
    std::set<std::string> people;
    while (!heap_.empty()) {
      RankedCandidate c = heap_.top().c;
      heap_.pop();
      FrameAction a;
      a.description = c.description;
      a.actor = c.lead_actor;
      a.target = c.lead_target;
      a.e = c.e;
      a.s = c.s;
      a.n = c.n;
      a.r = c.r;
      a.first_t = c.first_t;
      a.last_t = c.last_t;
      for (const auto& ft : c.features) {
        if (std::find(a.labels.begin(), a.labels.end(), ft.label) == a.labels.end())
          a.labels.push_back(ft.label);
        a.feature_ids.push_back(ft.feature_id);
        f.source_features.push_back(ft.feature_id);
        people.insert(ft.actor);
        if (ft.target) people.insert(*ft.target);
      }
      f.t_start = first ? c.first_t : std::min(f.t_start, c.first_t);
      f.t_end = first ? c.last_t : std::max(f.t_end, c.last_t);
      first = false;
      f.actions.push_back(std::move(a));
    }
    std::sort(f.source_features.begin(), f.source_features.end());
    f.characters.assign(people.begin(), people.end());
    oldest_.reset();
    return f;
  }

  std::size_t capacity_;
  Millis timeout_;
  std::priority_queue<Entry, std::vector<Entry>, Lower> heap_;
  std::uint64_t seq_ = 0;
  std::optional<Millis> oldest_;
  std::uint64_t next_frame_id_ = 1;
};

// --- classification --------------------------------------------------------------

struct FrameClassification {
  std::string summary;
  std::string tone;
  std::string function;
  int tension = 1;
  IntentType intent_type = IntentType::kRisingAction;
  /// False when the reply was malformed and the offline rules decided.
  bool from_backend = true;
};

struct FrameContext {
  const SceneState* scene = nullptr;
  const StoryRoleConfiguration* roles = nullptr;
  /// Non-overridden lines inside the frame's time span, in log order.
  std::vector<DialogueLine> dialogue;
  ArcPosition arc;
};

namespace fusion_detail {

inline std::string display_name(const SceneState& scene, const std::string& id) {
  if (const auto* c = scene.find_character(id)) return c->name;
  if (const auto* p = scene.find_prop(id)) return p->name;
  for (const auto& z : scene.zones)
    if (z.id == id) return z.tag;
  return id;
}

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace fusion_detail

inline constexpr std::string_view kFrameReplyInstructions =
    "Then add exactly 2 more lines:\n"
    "- Tension: [integer from 1 (calm) to 10 (extreme conflict)]\n"
    "- IntentType: [IncitingIncident, RisingAction, Climax, FallingAction or Resolution]\n";

/// Frame-analysis prompt: the per-action template for the lead action,
/// followed by the full ranked beat and its dialogue.
inline std::string build_frame_prompt(const IntentFrame& frame, const FrameContext& ctx) {
  using fusion_detail::display_name;
  const SceneState& scene = *ctx.scene;
  const FrameAction& lead = frame.actions.front();
  const Character* actor = scene.find_character(lead.actor);
  const CharacterRole* role =
      actor && ctx.roles ? ctx.roles->find(actor->role_config_ref) : nullptr;
  std::string scene_context = scene.environment_label;
  if (actor) {
    auto zones = zone_membership(scene, actor->position);
    for (const auto& z : zones) scene_context += "; in " + display_name(scene, z);
  }
  std::string out = prompts::fill_template(
      prompts::kIntentFrameTemplate,
      {{"CharacterName", display_name(scene, lead.actor)},
       {"Role", role ? role->role : "unspecified"},
       {"CharacterMotivation", role ? role->motivation : "unspecified"},
       {"KeyTraits", role ? text::join(role->traits, ", ") : "unspecified"},
       {"ActionType", lead.description},
       {"TargetObject", lead.target ? display_name(scene, *lead.target) : "(none)"}});
  // The two-line context placeholder is replaced separately because its key
  // spans a line break.
  text::replace_all(out, "<Local description of spatial or\nconversational context>",
                    scene_context);
  out += "\n";
  out += kFrameReplyInstructions;
  out += "\n";
  out += std::string(kActionsMarker) + "\n";
  int signal_hits = 0;
  for (const auto& a : frame.actions) {
    out += "ACTION: " + display_name(scene, a.actor) + " performed " + a.description + "\n";
    if (a.target) out += "TARGET: " + display_name(scene, *a.target) + "\n";
    for (const auto& l : a.labels)
      if (l == labels::kRelationShift) signal_hits += 3;
  }
  out += "LEAD ACTION: " + lead.description + "\n";
  out += "DIALOGUE:\n";
  for (const auto& line : ctx.dialogue)
    out += display_name(scene, line.speaker) + ": " + fusion_detail::one_line(line.text) + "\n";
  out += "\n";
  char progress[32];
  std::snprintf(progress, sizeof progress, "%.6f", ctx.arc.progress);
  out += "SIGNAL HITS: " + std::to_string(signal_hits) + "\n";
  out += std::string("SESSION PROGRESS: ") + progress + "\n";
  out += "PREVIOUS TENSION: " +
         (ctx.arc.previous_tension ? std::to_string(*ctx.arc.previous_tension) : "none") + "\n";
  out += std::string("CLIMAX SEEN: ") + (ctx.arc.climax_seen ? "yes" : "no") + "\n";
  return out;
}

/// Parses Summary/Tone/Function/Tension/IntentType lines. Throws
/// Error(kMalformedBackendReply) when any is missing or out of range.
inline FrameClassification parse_frame_reply(const std::vector<std::string>& reply) {
  std::vector<std::string> lines;
  for (auto l : reply) {
    for (auto& part : text::split_lines(l)) {
      std::string t = text::trim(part);
      if (t.rfind("- ", 0) == 0) t = t.substr(2);
      lines.push_back(t);
    }
  }
  auto need = [&](std::string_view key) {
    auto v = detail::line_value(lines, key);
    if (!v || v->empty())
      throw Error(ErrorCode::kMalformedBackendReply, "missing " + std::string(key));
    return *v;
  };
  FrameClassification c;
  c.summary = need("Summary:");
  c.tone = need("Tone:");
  c.function = need("Function:");
  std::string tension = need("Tension:");
  std::size_t used = 0;
  int t = 0;
  try {
    t = std::stoi(tension, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != tension.size() || t < 1 || t > 10)
    throw Error(ErrorCode::kMalformedBackendReply, "bad tension: " + tension);
  c.tension = t;
  auto type = intent_type_from_string(need("IntentType:"));
  if (!type) throw Error(ErrorCode::kMalformedBackendReply, "bad intent type");
  c.intent_type = *type;
  return c;
}

/// Asks `backend` to classify the frame. A malformed reply is re-decided by
/// `fallback` (the offline rules). Backend failures propagate.
inline FrameClassification classify_frame(const IntentFrame& frame, const FrameContext& ctx,
                                          GenerationBackend& backend,
                                          GenerationBackend& fallback) {
  if (frame.actions.empty()) throw Error(ErrorCode::kInvalidArgument, "empty frame");
  std::string prompt = build_frame_prompt(frame, ctx);
  try {
    return parse_frame_reply(backend.analyze(prompt));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kMalformedBackendReply) throw;
  }
  FrameClassification c = parse_frame_reply(fallback.analyze(prompt));
  c.from_backend = false;
  return c;
}

}  // namespace stagebeat
