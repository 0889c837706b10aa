#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <stdexcept>
#include <string_view>
#include <type_traits>
#include <vector>

#include "stagebeat/errors.hpp"
#include "stagebeat/narrative_rules.hpp"
#include "stagebeat/text.hpp"

namespace stagebeat {

enum class RequestPurpose { kDialogue, kSynopsis };

struct GenerationRequest {
  RequestPurpose purpose = RequestPurpose::kDialogue;
  std::string system_prompt;
  std::string context_block;
  std::size_t token_budget = 1024;
  std::string speaker;
  std::string speaker_name;
  std::string speaker_role;
  std::string addressee;
  std::string addressee_name;
  /// The line being answered; empty for proactive speech.
  std::string cue_line;
  /// Dialogue lines kept after truncation, oldest first.
  std::vector<std::string> history;

  std::size_t estimated_tokens() const {
    return text::tokens_for_words(text::whitespace_word_count(system_prompt) +
                                  text::whitespace_word_count(context_block));
  }
};

/// Text generation service. Implementations throw Error(kBackendFailure)
/// when the call itself fails.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string generate(const GenerationRequest& request) = 0;
  virtual std::vector<std::string> analyze(const std::string& prompt) = 0;
  virtual std::string name() const = 0;
};

struct SummaryRule {
  /// Every phrase must appear in the prompt (whole word, any case).
  std::vector<std::string> all;
  /// At least one phrase must appear; empty means no constraint.
  std::vector<std::string> any;
  std::string text;
};

struct BackendSeed {
  /// Reply templates keyed by character id; "*" applies to everyone.
  /// Templates may use {addressee} and {speaker}.
  std::map<std::string, std::vector<std::string>> replies;
  std::vector<SummaryRule> summaries;
};

// --- synopsis digest ------------------------------------------------------

struct DigestQuote {
  std::string speaker_name;
  std::string line;
};

struct DigestPart {
  std::vector<std::string> beats;
  std::optional<DigestQuote> quote;
  /// Last author-voiced line of the part; only set on the final part.
  std::optional<DigestQuote> closing;
};

struct SynopsisDigest {
  std::string location;
  std::vector<DigestPart> parts;
};

inline std::string render_digest(const SynopsisDigest& d) {
  std::string out = "SYNOPSIS DIGEST\nLOCATION: " + d.location + "\n";
  for (std::size_t i = 0; i < d.parts.size(); ++i) {
    out += "PART " + std::to_string(i + 1) + "\n";
    for (const auto& b : d.parts[i].beats) out += "BEAT: " + b + "\n";
    if (d.parts[i].quote) {
      out += "QUOTE: " + d.parts[i].quote->speaker_name + "|" + d.parts[i].quote->line + "\n";
    }
    if (d.parts[i].closing) {
      out += "CLOSING: " + d.parts[i].closing->speaker_name + "|" + d.parts[i].closing->line + "\n";
    }
  }
  return out;
}

inline SynopsisDigest parse_digest(std::string_view block) {
  SynopsisDigest d;
  for (const auto& line : text::split_lines(block)) {
    if (line.rfind("LOCATION: ", 0) == 0) {
      d.location = line.substr(10);
    } else if (line.rfind("PART ", 0) == 0) {
      d.parts.emplace_back();
    } else if (line.rfind("BEAT: ", 0) == 0 && !d.parts.empty()) {
      d.parts.back().beats.push_back(line.substr(6));
    } else if ((line.rfind("QUOTE: ", 0) == 0 || line.rfind("CLOSING: ", 0) == 0) &&
               !d.parts.empty()) {
      bool closing = line[0] == 'C';
      std::string rest = line.substr(closing ? 9 : 7);
      auto bar = rest.find('|');
      if (bar == std::string::npos) continue;
      DigestQuote q{rest.substr(0, bar), rest.substr(bar + 1)};
      (closing ? d.parts.back().closing : d.parts.back().quote) = std::move(q);
    }
  }
  return d;
}

inline constexpr std::string_view kQuoteOpen = "“";
inline constexpr std::string_view kQuoteClose = "”";

/// Template synopsis: one paragraph per digest part, each closing on its
/// quote. Paragraphs are separated by a blank line.
inline std::string synopsis_from_digest(const SynopsisDigest& d) {
  static constexpr std::string_view kOpeners[] = {"The story opens", "The conflict deepens",
                                                  "The story resolves"};
  static constexpr std::string_view kVerbs[] = {"says", "insists", "concludes"};
  std::vector<std::string> paragraphs;
  for (std::size_t i = 0; i < d.parts.size(); ++i) {
    const auto& part = d.parts[i];
    std::string p(kOpeners[std::min<std::size_t>(i, 2)]);
    if (i == 0 && !d.location.empty()) p += " at " + d.location;
    p += ".";
    for (const auto& beat : part.beats) p += " " + beat + ".";
    if (part.quote) {
      p += " " + part.quote->speaker_name + " " + std::string(kVerbs[std::min<std::size_t>(i, 2)]) +
           ", " + std::string(kQuoteOpen) + part.quote->line + std::string(kQuoteClose);
    }
    if (part.closing && (!part.quote || part.closing->line != part.quote->line)) {
      p += " In the end " + part.closing->speaker_name + " answers, " + std::string(kQuoteOpen) +
           part.closing->line + std::string(kQuoteClose);
    }
    paragraphs.push_back(std::move(p));
  }
  return text::join(paragraphs, "\n\n");
}

// --- deterministic backend -------------------------------------------------

/// Section marker that opens the per-beat part of a frame prompt.
inline constexpr std::string_view kActionsMarker = "ACTIONS (ranked):";

namespace detail {

inline std::optional<std::string> line_value(const std::vector<std::string>& lines,
                                             std::string_view key) {
  for (const auto& l : lines)
    if (l.rfind(key, 0) == 0) return text::trim(l.substr(key.size()));
  return std::nullopt;
}

template <typename T>
T number_value(const std::string& s, std::string_view key) {
  try {
    if constexpr (std::is_same_v<T, int>) return std::stoi(s);
    else return std::stod(s);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kMalformedBackendReply, std::string(key) + " " + s);
  }
}

}  // namespace detail

/// Reproducible stand-in for a language model. Dialogue replies are template
/// expansions keyed by (speaker role, addressee, last line); frame analysis
/// and arc analysis follow the offline narrative rules.
class DeterministicBackend : public GenerationBackend {
 public:
  DeterministicBackend() = default;
  explicit DeterministicBackend(BackendSeed seed) : seed_(std::move(seed)) {}

  std::string name() const override { return "deterministic"; }

  std::string generate(const GenerationRequest& req) override {
    if (req.purpose == RequestPurpose::kSynopsis) {
      return synopsis_from_digest(parse_digest(req.context_block));
    }
    const std::vector<std::string>* pool = nullptr;
    if (auto it = seed_.replies.find(req.speaker); it != seed_.replies.end() && !it->second.empty())
      pool = &it->second;
    else if (auto star = seed_.replies.find("*"); star != seed_.replies.end() && !star->second.empty())
      pool = &star->second;
    const auto& templates = pool ? *pool : default_replies();
    std::string key = req.speaker_role + "|" + req.addressee + "|" + req.cue_line;
    std::string reply = templates[text::fnv1a(key) % templates.size()];
    text::replace_all(reply, "{addressee}", req.addressee_name.empty() ? "friend" : req.addressee_name);
    text::replace_all(reply, "{speaker}", req.speaker_name);
    return reply;
  }

  std::vector<std::string> analyze(const std::string& prompt) override {
    auto lines = text::split_lines(prompt);
    if (auto last = detail::line_value(lines, "LAST LINE:")) {
      std::string utterance = *last;
      if (utterance.size() >= 2 && utterance.front() == '"' && utterance.back() == '"')
        utterance = utterance.substr(1, utterance.size() - 2);
      std::string emotion = emotion_of(utterance);
      return {"EMOTIONAL STATE: " + emotion,
              "PERSONALITY: consistent with the configured role",
              "RELATIONSHIP: " + std::string(conflict_hits(utterance) > 0 ? "strained" : "steady"),
              "ARC: " + std::string(emotion == "calm" ? "holds" : "advances")};
    }
    return analyze_frame(prompt, lines);
  }

 private:
  static const std::vector<std::string>& default_replies() {
    static const std::vector<std::string> kReplies = {
        "I hear you, {addressee}. Say what you truly mean.",
        "{addressee}, you test my patience today.",
        "Is that so, {addressee}? Then prove it.",
        "Careful, {addressee}. Words have weight here.",
        "We shall see, {addressee}. We shall see.",
    };
    return kReplies;
  }

  std::vector<std::string> analyze_frame(const std::string& prompt,
                                         const std::vector<std::string>& lines) const {
    // Summary rules only look at the beat itself, not the persona block.
    auto marker = prompt.find(kActionsMarker);
    std::string_view beat = marker == std::string::npos
                                ? std::string_view(prompt)
                                : std::string_view(prompt).substr(marker);
    std::string summary;
    for (const auto& rule : seed_.summaries) {
      bool ok = std::all_of(rule.all.begin(), rule.all.end(),
                            [&](const auto& p) { return text::contains_whole_word(beat, p); });
      bool any = rule.any.empty() ||
                 std::any_of(rule.any.begin(), rule.any.end(),
                             [&](const auto& p) { return text::contains_whole_word(beat, p); });
      if (ok && any) {
        summary = rule.text;
        break;
      }
    }
    if (summary.empty()) {
      if (auto action = detail::line_value(lines, "LEAD ACTION:")) summary = *action;
    }
    // Dialogue and signals appear after the DIALOGUE: marker.
    std::string dialogue;
    bool in_dialogue = false;
    for (const auto& l : lines) {
      if (l == "DIALOGUE:") {
        in_dialogue = true;
        continue;
      }
      if (in_dialogue) {
        if (l.empty()) break;
        auto colon = l.find(": ");
        dialogue += (colon == std::string::npos ? l : l.substr(colon + 2)) + "\n";
      }
    }
    int signal_hits = 0;
    if (auto s = detail::line_value(lines, "SIGNAL HITS:")) signal_hits = detail::number_value<int>(*s, "SIGNAL HITS:");
    int tension = tension_of(dialogue, signal_hits);
    ArcPosition arc;
    if (auto p = detail::line_value(lines, "SESSION PROGRESS:")) arc.progress = detail::number_value<double>(*p, "SESSION PROGRESS:");
    if (auto p = detail::line_value(lines, "PREVIOUS TENSION:"); p && *p != "none")
      arc.previous_tension = detail::number_value<int>(*p, "PREVIOUS TENSION:");
    if (auto p = detail::line_value(lines, "CLIMAX SEEN:")) arc.climax_seen = *p == "yes";
    IntentType type = intent_type_for(tension, arc);
    return {"Summary: " + summary, "Tone: " + tone_for_tension(tension),
            "Function: serves the story as " + std::string(to_string(type)),
            "Tension: " + std::to_string(tension), "IntentType: " + std::string(to_string(type))};
  }

  BackendSeed seed_;
};

/// Backend that fails every call; used to exercise fallback paths.
class FailingBackend : public GenerationBackend {
 public:
  std::string name() const override { return "failing"; }
  std::string generate(const GenerationRequest&) override {
    throw Error(ErrorCode::kBackendFailure, "backend unavailable");
  }
  std::vector<std::string> analyze(const std::string&) override {
    throw Error(ErrorCode::kBackendFailure, "backend unavailable");
  }
};

}  // namespace stagebeat
