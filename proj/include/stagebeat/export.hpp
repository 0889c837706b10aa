#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/agents.hpp"
#include "stagebeat/assembly.hpp"
#include "stagebeat/backend.hpp"
#include "stagebeat/interaction_log.hpp"
#include "stagebeat/narrative_rules.hpp"
#include "stagebeat/scene_document.hpp"
#include "stagebeat/text.hpp"

namespace stagebeat {

enum class ExportFormat { kSummary, kScreenplay };

inline std::string_view to_string(ExportFormat f) {
  return f == ExportFormat::kSummary ? "Summary" : "Screenplay";
}

struct ExportBundle {
  /// Timeline order.
  std::vector<StoryMarble> marbles;
  /// Non-overridden speech, log order.
  std::vector<DialogueLine> dialogue;
  LogMetadata metadata;
  StoryRoleConfiguration roles;
  /// Scene as of the end of play; supplies names, aliases and the slug.
  SceneState scene;
  std::vector<ScriptLine> preamble;
};

inline ExportBundle make_export_bundle(const Timeline& timeline, const SessionLog& log,
                                       const SceneFixture& fixture, const SceneState& scene) {
  ExportBundle b;
  b.marbles = timeline.ordered();
  for (auto& l : dialogue_history(log))
    if (!l.overridden) b.dialogue.push_back(std::move(l));
  b.metadata = log.metadata();
  b.roles = fixture.roles;
  b.scene = scene;
  b.preamble = fixture.preamble;
  return b;
}

namespace export_detail {

inline std::string name_of(const SceneState& s, const std::string& id) {
  if (const auto* c = s.find_character(id)) return c->name;
  return id;
}

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

inline void require_marbles(const ExportBundle& b) {
  if (b.marbles.empty()) throw Error(ErrorCode::kEmptyTimeline, "no marbles on the timeline");
}

}  // namespace export_detail

/// Which marble each dialogue line belongs to: the chronologically earliest
/// marble whose capture time is at or after the line; lines after the last
/// capture go to the latest marble. Result is indexed like bundle.dialogue.
inline std::vector<std::uint64_t> assign_lines(const ExportBundle& b) {
  std::vector<const StoryMarble*> chrono;
  for (const auto& m : b.marbles) chrono.push_back(&m);
  std::stable_sort(chrono.begin(), chrono.end(), [](const StoryMarble* x, const StoryMarble* y) {
    return x->capture_t != y->capture_t ? x->capture_t < y->capture_t : x->marble_id < y->marble_id;
  });
  std::vector<std::uint64_t> out;
  if (chrono.empty()) return out;
  for (const auto& line : b.dialogue) {
    auto it = std::find_if(chrono.begin(), chrono.end(),
                           [&](const StoryMarble* m) { return m->capture_t >= line.t; });
    out.push_back(it == chrono.end() ? chrono.back()->marble_id : (*it)->marble_id);
  }
  return out;
}

inline std::map<std::uint64_t, std::vector<DialogueLine>> lines_by_marble(const ExportBundle& b) {
  std::map<std::uint64_t, std::vector<DialogueLine>> out;
  for (const auto& m : b.marbles) out[m.marble_id];
  auto owners = assign_lines(b);
  for (std::size_t i = 0; i < owners.size(); ++i) out[owners[i]].push_back(b.dialogue[i]);
  return out;
}

// --- synopsis ----------------------------------------------------------------

/// Marble index range [first, last) of tercile `part` for `k` marbles. Never
/// empty; with fewer than three marbles parts share marbles.
inline std::pair<std::size_t, std::size_t> tercile(std::size_t part, std::size_t k) {
  std::size_t first = part * k / 3;
  std::size_t last = std::max(first + 1, (part + 1) * k / 3);
  first = std::min(first, k - 1);
  return {first, std::min(last, k)};
}

inline SynopsisDigest build_digest(const ExportBundle& b) {
  export_detail::require_marbles(b);
  auto owned = lines_by_marble(b);
  auto pick_quote = [&](const std::vector<DialogueLine>& lines) -> std::optional<DigestQuote> {
    const DialogueLine* best = nullptr;
    int best_t = 0;
    for (const auto& l : lines) {
      int t = tension_of(l.text);
      if (!best || t > best_t) {
        best = &l;
        best_t = t;
      }
    }
    if (!best) return std::nullopt;
    return DigestQuote{export_detail::name_of(b.scene, best->speaker),
                       export_detail::one_line(best->text)};
  };

  SynopsisDigest d;
  d.location = b.roles.location;
  const std::size_t k = b.marbles.size();
  for (std::size_t part = 0; part < 3; ++part) {
    auto [first, last] = tercile(part, k);
    DigestPart p;
    std::vector<DialogueLine> lines;
    for (std::size_t i = first; i < last; ++i) {
      p.beats.push_back(export_detail::one_line(b.marbles[i].card.summary));
      const auto& ls = owned[b.marbles[i].marble_id];
      lines.insert(lines.end(), ls.begin(), ls.end());
    }
    std::stable_sort(lines.begin(), lines.end(),
                     [](const DialogueLine& x, const DialogueLine& y) { return x.event_id < y.event_id; });
    p.quote = pick_quote(lines);
    if (!p.quote) p.quote = pick_quote(b.dialogue);
    if (part == 2) {
      for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        if (it->kind != EventKind::kUserSpeech) continue;
        p.closing = DigestQuote{export_detail::name_of(b.scene, it->speaker),
                                export_detail::one_line(it->text)};
        break;
      }
    }
    d.parts.push_back(std::move(p));
  }
  return d;
}

/// Splits on blank lines, dropping empty paragraphs.
inline std::vector<std::string> paragraphs_of(std::string_view synopsis) {
  std::vector<std::string> out;
  std::string cur;
  for (const auto& line : text::split_lines(synopsis)) {
    if (text::trim(line).empty()) {
      if (!text::trim(cur).empty()) out.push_back(text::trim(cur));
      cur.clear();
    } else {
      cur += (cur.empty() ? "" : "\n") + line;
    }
  }
  if (!text::trim(cur).empty()) out.push_back(text::trim(cur));
  return out;
}

/// Strings between curly or straight double quotes.
inline std::vector<std::string> quoted_spans(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t open = std::string_view::npos, skip = 0;
    auto curly = s.find(kQuoteOpen, pos);
    auto straight = s.find('"', pos);
    if (curly != std::string_view::npos && (straight == std::string_view::npos || curly < straight)) {
      open = curly;
      skip = kQuoteOpen.size();
    } else if (straight != std::string_view::npos) {
      open = straight;
      skip = 1;
    }
    if (open == std::string_view::npos) break;
    std::string_view closer = skip == 1 ? std::string_view("\"") : kQuoteClose;
    auto close = s.find(closer, open + skip);
    if (close == std::string_view::npos) break;
    out.emplace_back(s.substr(open + skip, close - open - skip));
    pos = close + closer.size();
  }
  return out;
}

/// Three paragraphs, each quoting a verbatim line from `dialogue`.
inline bool synopsis_is_valid(std::string_view synopsis, const std::vector<DialogueLine>& dialogue) {
  auto paras = paragraphs_of(synopsis);
  if (paras.size() != 3) return false;
  for (const auto& p : paras) {
    bool quoted = false;
    for (const auto& q : quoted_spans(p)) {
      if (q.empty()) continue;
      for (const auto& l : dialogue)
        if (export_detail::one_line(l.text).find(q) != std::string::npos) quoted = true;
    }
    if (!quoted) return false;
  }
  return true;
}

inline constexpr std::string_view kSynopsisInstructions =
    "Write a three-paragraph synopsis of the story below: setup, development and resolution.\n"
    "Separate paragraphs with one blank line. Each paragraph must quote at least one QUOTE or\n"
    "CLOSING line verbatim inside double quotation marks. Do not invent dialogue.\n";

/// Three-paragraph synopsis. A backend reply that breaks the format is
/// replaced by the template rendering of the same digest.
inline std::string export_summary(const ExportBundle& b, GenerationBackend& backend) {
  SynopsisDigest digest = build_digest(b);
  GenerationRequest req;
  req.purpose = RequestPurpose::kSynopsis;
  req.system_prompt = std::string(kSynopsisInstructions);
  req.context_block = render_digest(digest);
  req.token_budget = 2048;
  std::string reply = backend.generate(req);
  if (synopsis_is_valid(reply, b.dialogue)) return text::trim(reply);
  return synopsis_from_digest(digest);
}

// --- screenplay --------------------------------------------------------------------

enum class Provenance { kUser, kAI, kScript };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kUser: return "User";
    case Provenance::kAI: return "AI";
    case Provenance::kScript: return "Script";
  }
  return "?";
}

struct ScreenplayBeat {
  std::string speaker;  // uppercase display name
  std::string speaker_id;
  std::string text;
  Provenance provenance = Provenance::kUser;
  std::uint64_t event_id = 0;  // 0 for scripted lines
};

struct BeatGroup {
  std::uint64_t marble_id = 0;
  std::string summary;
  std::vector<ScreenplayBeat> beats;
};

struct CastEntry {
  std::string name;
  int lines = 0;
};

struct Screenplay {
  std::string opening = "FADE IN:";
  std::string slug;
  std::string presence;
  std::vector<CastEntry> cast;
  std::vector<ScreenplayBeat> preamble;
  std::vector<BeatGroup> groups;
  std::string fade_out = "FADE OUT.";
  std::string closing = "THE END";
};

inline constexpr std::string_view kImprovMarker = "> IMPROVISED DIALOGUE <";
inline constexpr std::string_view kImprovNote =
    "[[Lines in double quotes were voiced by the AI characters; unquoted lines were voiced by the author.]]";

inline std::string presence_line(const SceneState& scene) {
  std::vector<std::string> names;
  for (const auto& c : scene.characters) names.push_back(c.name);
  if (names.empty()) return "The stage is empty.";
  if (names.size() == 1) return names[0] + " is present.";
  std::string head;
  for (std::size_t i = 0; i + 1 < names.size(); ++i) head += (i ? ", " : "") + names[i];
  return head + " and " + names.back() + " are present.";
}

/// "EXT. CITY HALL - DAY". Interior when the environment label says so.
inline std::string scene_heading(const StoryRoleConfiguration& roles, const SceneState& scene) {
  std::string place = roles.location.empty() ? scene.environment_label : roles.location;
  if (place.empty()) place = "stage";
  std::string when = roles.time.empty() ? "day" : roles.time;
  bool inside = false;
  for (const char* w : {"office", "room", "interior", "indoors", "inside"})
    inside = inside || text::contains_whole_word(scene.environment_label, w);
  return std::string(inside ? "INT. " : "EXT. ") + text::upper(place) + " - " + text::upper(when);
}

inline Screenplay export_screenplay(const ExportBundle& b) {
  export_detail::require_marbles(b);
  Screenplay sp;
  sp.slug = scene_heading(b.roles, b.scene);
  sp.presence = presence_line(b.scene);
  for (const auto& c : b.scene.characters) {
    int n = static_cast<int>(std::count_if(b.dialogue.begin(), b.dialogue.end(),
                                           [&](const DialogueLine& l) { return l.speaker == c.id; }));
    sp.cast.push_back({c.name, n});
  }
  std::stable_sort(sp.cast.begin(), sp.cast.end(),
                   [](const CastEntry& x, const CastEntry& y) { return x.lines > y.lines; });
  for (const auto& l : b.preamble)
    sp.preamble.push_back({text::upper(export_detail::name_of(b.scene, l.speaker)), l.speaker,
                           export_detail::one_line(l.text), Provenance::kScript, 0});
  auto owned = lines_by_marble(b);
  for (const auto& m : b.marbles) {
    BeatGroup g{m.marble_id, m.card.summary, {}};
    for (const auto& l : owned[m.marble_id])
      g.beats.push_back({text::upper(export_detail::name_of(b.scene, l.speaker)), l.speaker,
                         export_detail::one_line(l.text),
                         is_ai_speech(l.kind) ? Provenance::kAI : Provenance::kUser, l.event_id});
    sp.groups.push_back(std::move(g));
  }
  return sp;
}

inline std::string rendered_line(const ScreenplayBeat& b) {
  return b.provenance == Provenance::kAI ? "\"" + b.text + "\"" : b.text;
}

/// Fountain plain text.
inline std::string render_fountain(const Screenplay& sp) {
  std::string out;
  auto block = [&](const std::string& s) { out += s + "\n\n"; };
  block(sp.opening);
  block(sp.slug);
  block(sp.presence);
  std::string cast = "[[Cast by activity:";
  for (std::size_t i = 0; i < sp.cast.size(); ++i)
    cast += std::string(i ? "," : "") + " " + sp.cast[i].name + " (" + std::to_string(sp.cast[i].lines) +
            (sp.cast[i].lines == 1 ? " line)" : " lines)");
  block(cast + "]]");
  for (const auto& b : sp.preamble) block(b.speaker + "\n" + rendered_line(b));
  block(std::string(kImprovMarker));
  block(std::string(kImprovNote));
  for (std::size_t i = 0; i < sp.groups.size(); ++i) {
    block("[[Marble " + std::to_string(i + 1) + ": " + sp.groups[i].summary + "]]");
    for (const auto& b : sp.groups[i].beats) block(b.speaker + "\n" + rendered_line(b));
  }
  block(sp.fade_out);
  out += sp.closing + "\n";
  return out;
}

inline nlohmann::json screenplay_to_json(const Screenplay& sp) {
  using nlohmann::json;
  auto beat = [](const ScreenplayBeat& b) {
    return json{{"speaker", b.speaker},
                {"speaker_id", b.speaker_id},
                {"text", b.text},
                {"provenance", to_string(b.provenance)},
                {"event_id", b.event_id}};
  };
  json cast = json::array(), pre = json::array(), groups = json::array();
  for (const auto& c : sp.cast) cast.push_back({{"name", c.name}, {"lines", c.lines}});
  for (const auto& b : sp.preamble) pre.push_back(beat(b));
  for (const auto& g : sp.groups) {
    json beats = json::array();
    for (const auto& b : g.beats) beats.push_back(beat(b));
    groups.push_back({{"marble_id", g.marble_id}, {"summary", g.summary}, {"beats", beats}});
  }
  return {{"opening", sp.opening}, {"slug", sp.slug},   {"presence", sp.presence},
          {"cast", cast},          {"preamble", pre},    {"groups", groups},
          {"fade_out", sp.fade_out}, {"closing", sp.closing}};
}

/// Structural problems in Fountain text: opening and closing transitions,
/// a scene heading, uppercase speaker cues each followed by dialogue, and
/// quoting that is either whole-line or absent. Empty when well formed.
inline std::vector<std::string> lint_fountain(std::string_view fountain) {
  std::vector<std::string> problems;
  auto blocks = paragraphs_of(fountain);
  if (blocks.empty()) return {"empty document"};
  if (blocks.front() != "FADE IN:") problems.push_back("does not open with FADE IN:");
  if (blocks.back() != "THE END") problems.push_back("does not close with THE END");
  if (blocks.size() < 2 || blocks[blocks.size() - 2] != "FADE OUT.")
    problems.push_back("FADE OUT. does not precede THE END");
  bool heading = blocks.size() > 1 && (blocks[1].rfind("EXT.", 0) == 0 || blocks[1].rfind("INT.", 0) == 0);
  if (!heading) problems.push_back("missing scene heading after FADE IN:");
  for (std::size_t i = 2; i + 2 < blocks.size(); ++i) {
    const std::string& b = blocks[i];
    if (b.rfind("[[", 0) == 0 || b.rfind(">", 0) == 0) continue;
    auto lines = text::split_lines(b);
    if (lines.size() == 1) continue;  // action line
    if (lines.size() != 2) {
      problems.push_back("block " + std::to_string(i) + " is not a cue plus one dialogue line");
      continue;
    }
    if (lines[0] != text::upper(lines[0]) || lines[0].empty())
      problems.push_back("speaker cue not uppercase: " + lines[0]);
    const std::string& d = lines[1];
    bool opens = !d.empty() && d.front() == '"';
    bool closes = d.size() > 1 && d.back() == '"';
    if (opens != closes) problems.push_back("unbalanced quoting: " + d);
  }
  return problems;
}

/// Checks the quoting convention against provenance: AI lines quoted, the
/// rest not, speakers uppercase.
inline std::vector<std::string> check_provenance(const Screenplay& sp) {
  std::vector<std::string> problems;
  auto check = [&](const ScreenplayBeat& b) {
    std::string r = rendered_line(b);
    bool quoted = r.size() >= 2 && r.front() == '"' && r.back() == '"';
    if (quoted != (b.provenance == Provenance::kAI))
      problems.push_back("quoting does not match provenance: " + b.text);
    if (b.speaker != text::upper(b.speaker)) problems.push_back("speaker not uppercase: " + b.speaker);
  };
  for (const auto& b : sp.preamble) check(b);
  for (const auto& g : sp.groups)
    for (const auto& b : g.beats) check(b);
  return problems;
}

// --- continuity ----------------------------------------------------------------------

enum class ContinuityKind { kPropBeforeIntroduction, kDialogueAfterExit };

inline std::string_view to_string(ContinuityKind k) {
  return k == ContinuityKind::kPropBeforeIntroduction ? "PropBeforeIntroduction"
                                                      : "DialogueAfterExit";
}

struct ContinuityNote {
  ContinuityKind kind;
  std::uint64_t marble_id = 0;
  std::string subject;
  std::string message;
  friend bool operator==(const ContinuityNote&, const ContinuityNote&) = default;
};

/// Props a marble refers to: those its observations touched plus those
/// named in its dialogue.
inline std::map<std::uint64_t, std::set<std::string>> prop_references(const ExportBundle& b) {
  std::map<std::uint64_t, std::set<std::string>> refs;
  auto owned = lines_by_marble(b);
  for (const auto& m : b.marbles) {
    auto& r = refs[m.marble_id];
    r.insert(m.props.begin(), m.props.end());
    for (const auto& l : owned[m.marble_id])
      for (const auto& p : b.scene.props)
        if (NarratorAgent::mentions(b.scene, p.id, l.text)) r.insert(p.id);
  }
  return refs;
}

/// Advisory continuity warnings for the current timeline order. A prop is
/// introduced by the chronologically first marble referring to it; any
/// referring marble placed ahead of that one is flagged. A character who
/// exits in one marble and speaks in a marble placed after it, though
/// captured earlier, is flagged too.
inline std::vector<ContinuityNote> continuity_notes(const ExportBundle& b) {
  std::vector<ContinuityNote> notes;
  auto refs = prop_references(b);
  auto label = [&](std::size_t pos) {
    return "marble " + std::to_string(pos + 1) + " (" + b.marbles[pos].card.summary + ")";
  };
  auto prop_name = [&](const std::string& id) {
    const Prop* p = b.scene.find_prop(id);
    return p ? p->name : id;
  };
  std::set<std::string> props;
  for (const auto& [id, r] : refs) props.insert(r.begin(), r.end());
  for (const auto& prop : props) {
    std::optional<std::size_t> intro;
    for (std::size_t i = 0; i < b.marbles.size(); ++i) {
      if (!refs[b.marbles[i].marble_id].count(prop)) continue;
      if (!intro || b.marbles[i].capture_t < b.marbles[*intro].capture_t ||
          (b.marbles[i].capture_t == b.marbles[*intro].capture_t &&
           b.marbles[i].marble_id < b.marbles[*intro].marble_id))
        intro = i;
    }
    for (std::size_t i = 0; intro && i < *intro; ++i) {
      if (!refs[b.marbles[i].marble_id].count(prop)) continue;
      notes.push_back({ContinuityKind::kPropBeforeIntroduction, b.marbles[i].marble_id, prop,
                       label(i) + " uses the " + prop_name(prop) + " before " + label(*intro) +
                           " introduces it"});
    }
  }
  auto owned = lines_by_marble(b);
  for (std::size_t i = 0; i < b.marbles.size(); ++i) {
    for (const auto& who : b.marbles[i].exits) {
      for (std::size_t j = i + 1; j < b.marbles.size(); ++j) {
        if (b.marbles[j].capture_t >= b.marbles[i].capture_t) continue;
        const auto& ls = owned[b.marbles[j].marble_id];
        bool speaks = std::any_of(ls.begin(), ls.end(), [&](const DialogueLine& l) { return l.speaker == who; });
        if (!speaks) continue;
        notes.push_back({ContinuityKind::kDialogueAfterExit, b.marbles[j].marble_id, who,
                         export_detail::name_of(b.scene, who) + " speaks in " + label(j) +
                             " after exiting in " + label(i)});
      }
    }
  }
  return notes;
}

inline nlohmann::json continuity_to_json(const std::vector<ContinuityNote>& notes) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : notes)
    out.push_back({{"kind", to_string(n.kind)},
                   {"marble_id", n.marble_id},
                   {"subject", n.subject},
                   {"message", n.message}});
  return out;
}

inline nlohmann::json metadata_to_json(const LogMetadata& md) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [k, v] : md.interaction_counts) counts[std::string(to_string(k))] = v;
  return {{"duration_ms", md.duration_ms},
          {"export_time", md.export_time ? nlohmann::json(*md.export_time) : nlohmann::json(nullptr)},
          {"interaction_counts", counts}};
}

}  // namespace stagebeat
