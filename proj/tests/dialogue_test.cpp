#include <sstream>

#include <gtest/gtest.h>

#include "addressee_cases.hpp"
#include "stagebeat/dialogue.hpp"
#include "support.hpp"

using namespace stagebeat;

namespace {

std::size_t word_oracle(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

std::size_t token_oracle(std::size_t words) { return (13 * words) / 10 + ((13 * words) % 10 != 0 ? 1 : 0); }

std::size_t prompt_tokens(const GenerationRequest& r) {
  return token_oracle(word_oracle(r.system_prompt) + word_oracle(r.context_block));
}

struct Played {
  SceneState scene;
  SessionLog log;
};

// Robin and Pemberton trade `n` lines of random length.
Played chatter(support::Gen& gen, int n) {
  Played p{support::robinhood().scene, SessionLog("s", "robinhood", "now")};
  static const std::vector<std::string> vocab{"gold", "the", "tax", "forest", "you", "will", "never", "have", "it",
                                              "sir", "my", "bread"};
  Millis t = 0;
  for (int i = 0; i < n; ++i) {
    t += 100;
    std::string line;
    for (int k = 0, len = static_cast<int>(gen.integer(1, 60)); k < len; ++k) line += (k ? " " : "") + gen.pick(vocab);
    bool robin = i % 2 == 0;
    p.log.append({0, t, robin ? EventKind::kAIReactiveSpeech : EventKind::kAIProactiveSpeech,
                  robin ? "robin" : "pemberton", SpeechPayload{line, robin ? "pemberton" : "robin", std::nullopt}});
  }
  return p;
}

PromptInputs inputs_for(const Played& p, std::size_t budget) {
  PromptInputs in;
  in.scene = &p.scene;
  in.roles = &support::robinhood().roles;
  in.log = &p.log;
  in.speaker = "robin";
  in.addressee = "pemberton";
  in.cue_event = p.log.empty() ? 0 : p.log.events().back().event_id;
  in.now = p.log.last_t();
  in.budget = budget;
  return in;
}

}  // namespace

TEST(Addressee, TableAgreesWithOracle) {
  auto table = addressee::cases();
  ASSERT_EQ(table.size(), 50u);
  int named = 0, facing = 0, nearest = 0;
  for (const auto& c : table) {
    auto got = infer_addressee(c.scene, c.speaker, c.line);
    EXPECT_EQ(got, addressee::oracle(c.scene, c.speaker, c.line)) << c.label;
    if (c.annotated) EXPECT_EQ(got, *c.annotated) << c.label;
    named += c.kind == addressee::Kind::kNamed;
    facing += c.kind == addressee::Kind::kFacing;
    nearest += c.kind == addressee::Kind::kNearest;
  }
  EXPECT_GE(named, 15);
  EXPECT_GE(facing, 10);
  EXPECT_GE(nearest, 10);
}

TEST(Addressee, BreadLineGoesToMary) {
  const auto& s = support::robinhood().scene;
  EXPECT_EQ(infer_addressee(s, "robin", "Give Mary her bread back."), std::optional<std::string>("mary"));
}

TEST(UserSpeech, RequiresHeldCharacterAndText) {
  auto s = support::robinhood().scene;
  SessionLog log("s", "robinhood", "now");
  EXPECT_THROW(user_speak(s, log, "robin", "Hello", 0), Error);
  s = grab_character(s, "robin", 0).scene;
  try {
    user_speak(s, log, "robin", "   ", 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyUtterance);
  }
  auto ev = user_speak(s, log, "robin", "  Mary, come here.  ", 10);
  EXPECT_EQ(ev.speech().text, "Mary, come here.");
  EXPECT_EQ(ev.speech().addressee, std::optional<std::string>("mary"));
  EXPECT_FALSE(ev.speech().overrides);
}

TEST(UserSpeech, OverridesPrecedingAiLineOnly) {
  auto s = support::robinhood().scene;
  SessionLog log("s", "robinhood", "now");
  auto ai = log.append({0, 5, EventKind::kAIReactiveSpeech, "robin", SpeechPayload{"Hm, Mary.", "mary", std::nullopt}})
                .event_id;
  auto g = grab_character(s, "robin", 10);
  log.append(g.event);
  auto ev = user_speak(g.scene, log, "robin", "No, let me say it.", 20);
  EXPECT_EQ(ev.speech().overrides, std::optional<std::uint64_t>(ai));
  log.append(ev);
  // Nothing left to override.
  auto again = user_speak(g.scene, log, "robin", "And another thing.", 30);
  EXPECT_FALSE(again.speech().overrides);
  // A movement after the AI line breaks the link.
  SessionLog log2("s", "robinhood", "now");
  log2.append({0, 5, EventKind::kAIReactiveSpeech, "robin", SpeechPayload{"Hm.", "mary", std::nullopt}});
  auto m = move_character(s, "robin", {0.3, 0, 0.3}, 6);
  log2.append(m.event);
  auto g2 = grab_character(m.scene, "robin", 7);
  EXPECT_FALSE(user_speak(g2.scene, log2, "robin", "Mine.", 8).speech().overrides);
}

TEST(PromptBudget, NeverExceededAndMonotone) {
  support::Gen gen(99);
  for (int trial = 0; trial < 60; ++trial) {
    auto p = chatter(gen, static_cast<int>(gen.integer(0, 80)));
    std::vector<std::string> prev;
    std::size_t prev_kept = 0;
    for (std::size_t budget = 512; budget <= 2048; budget += 64) {
      GenerationRequest r;
      try {
        r = assemble_prompt(inputs_for(p, budget));
      } catch (const Error& e) {
        ASSERT_EQ(e.code(), ErrorCode::kBudgetTooSmall);
        continue;
      }
      ASSERT_LE(prompt_tokens(r), budget) << "trial " << trial;
      ASSERT_GE(r.history.size(), prev_kept);
      // The kept lines are the newest ones: a smaller budget keeps a suffix.
      ASSERT_TRUE(std::equal(prev.begin(), prev.end(), r.history.end() - static_cast<std::ptrdiff_t>(prev.size())));
      prev = r.history;
      prev_kept = r.history.size();
    }
  }
}

TEST(PromptBudget, RejectsTinyBudgets) {
  Played p{support::robinhood().scene, SessionLog("s", "robinhood", "now")};
  try {
    assemble_prompt(inputs_for(p, 511));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBudgetTooSmall);
  }
  EXPECT_NO_THROW(assemble_prompt(inputs_for(p, kMinTokenBudget)));
}

TEST(PromptBudget, CueAndSectionsPresent) {
  support::Gen gen(1);
  auto p = chatter(gen, 6);
  auto r = assemble_prompt(inputs_for(p, 1024));
  EXPECT_FALSE(r.cue_line.empty());
  EXPECT_NE(r.context_block.find("RESPOND TO:"), std::string::npos);
  EXPECT_NE(r.context_block.find("RECENT DIALOGUE:"), std::string::npos);
  EXPECT_NE(r.system_prompt.find("Robin Hood"), std::string::npos);
  EXPECT_EQ(r.speaker_name, "Robin Hood");
  EXPECT_EQ(r.addressee_name, "Lord Pemberton");
  EXPECT_EQ(r.history.size(), 5u);
}

TEST(Proactive, QuietestFreeCharacterSpeaks) {
  auto s = support::robinhood().scene;
  SessionLog log("s", "robinhood", "now");
  EXPECT_EQ(proactive_speaker(s, log), std::optional<std::string>("robin"));
  log.append({0, 1, EventKind::kAIReactiveSpeech, "robin", SpeechPayload{"a", "mary", std::nullopt}});
  EXPECT_EQ(proactive_speaker(s, log), std::optional<std::string>("mary"));
  log.append({0, 2, EventKind::kAIReactiveSpeech, "mary", SpeechPayload{"b", "robin", std::nullopt}});
  EXPECT_EQ(proactive_speaker(s, log), std::optional<std::string>("pemberton"));
  s = grab_character(s, "pemberton", 3).scene;
  EXPECT_EQ(proactive_speaker(s, log), std::optional<std::string>("robin"));
  // Robin faces -z from (0.2, 0.9); Pemberton is inside that cone.
  EXPECT_EQ(proactive_addressee(support::robinhood().scene, "robin"), std::optional<std::string>("pemberton"));
}

TEST(StaleReply, GrabOfSpeakerAfterRequest) {
  SessionLog log("s", "robinhood", "now");
  log.append({0, 1, EventKind::kUserSpeech, "mary", SpeechPayload{"Robin?", "robin", std::nullopt}});
  PendingReply p{"robin", "mary", 1, 1, 1, EventKind::kAIReactiveSpeech};
  EXPECT_FALSE(reply_is_stale(log, p));
  log.append({0, 2, EventKind::kCharacterGrab, "mary", NoPayload{}});
  EXPECT_FALSE(reply_is_stale(log, p));
  log.append({0, 3, EventKind::kCharacterGrab, "robin", NoPayload{}});
  EXPECT_TRUE(reply_is_stale(log, p));
}
