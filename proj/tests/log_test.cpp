#include <gtest/gtest.h>

#include "stagebeat/interaction_log.hpp"
#include "support.hpp"

using namespace stagebeat;

namespace {

InteractionEvent said(Millis t, const std::string& who, const std::string& text,
                      std::optional<std::uint64_t> overrides = std::nullopt,
                      EventKind kind = EventKind::kUserSpeech) {
  return {0, t, kind, who, SpeechPayload{text, std::nullopt, overrides}};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

SessionLog random_log(support::Gen& gen) {
  SessionLog log("s" + std::to_string(gen.integer(1, 99)), "scene", "2024-01-01T00:00:00Z");
  Millis t = 0;
  std::vector<std::uint64_t> ai_ids;
  int n = static_cast<int>(gen.integer(0, 40));
  for (int i = 0; i < n; ++i) {
    t += gen.integer(0, 2000);
    std::string who = gen.pick(std::vector<std::string>{"a", "b", "c"});
    InteractionEvent ev;
    ev.t = t;
    ev.actor = who;
    switch (gen.integer(0, 5)) {
      case 0: ev.kind = EventKind::kCharacterGrab; ev.payload = NoPayload{}; break;
      case 1: ev.kind = EventKind::kCharacterRelease; ev.payload = NoPayload{}; break;
      case 2:
        ev.kind = EventKind::kCharacterMovement;
        ev.payload = MovementPayload{gen.floor_point(), gen.floor_point()};
        break;
      case 3:
        ev.kind = EventKind::kCharacterObjectGrab;
        ev.payload = ObjectGrabPayload{"p" + std::to_string(gen.integer(0, 3)), gen.coin() ? Hand::kLeft : Hand::kRight};
        break;
      case 4: {
        ev.kind = gen.coin() ? EventKind::kAIReactiveSpeech : EventKind::kAIProactiveSpeech;
        ev.payload = SpeechPayload{"line " + std::to_string(i), std::string("b"), std::nullopt};
        break;
      }
      default: {
        ev.kind = EventKind::kUserSpeech;
        std::optional<std::uint64_t> ov;
        if (!ai_ids.empty() && gen.coin()) ov = ai_ids.back();
        ev.payload = SpeechPayload{"user line " + std::to_string(i), std::nullopt, ov};
      }
    }
    const auto& stored = log.append(ev);
    if (is_ai_speech(stored.kind)) ai_ids.push_back(stored.event_id);
  }
  log.extend_duration(t + gen.integer(0, 5000));
  if (gen.coin()) log.set_export_time(log.metadata().duration_ms);
  return log;
}

}  // namespace

TEST(SessionLog, AssignsIdsAndCounts) {
  SessionLog log("s1", "robinhood", "now");
  auto a = log.append({0, 10, EventKind::kCharacterGrab, "robin", NoPayload{}}).event_id;
  auto b = log.append(said(10, "robin", "hello")).event_id;
  EXPECT_EQ(a, 1u);
  EXPECT_EQ(b, 2u);
  EXPECT_EQ(log.metadata().interaction_counts.at(EventKind::kCharacterGrab), 1);
  EXPECT_EQ(log.metadata().interaction_counts.at(EventKind::kUserSpeech), 1);
  EXPECT_EQ(log.metadata().interaction_counts.at(EventKind::kCharacterMovement), 0);
  EXPECT_EQ(log.metadata().duration_ms, 10);
}

TEST(SessionLog, RejectsBadAppends) {
  SessionLog log("s1", "x", "now");
  log.append(said(100, "a", "hi"));
  EXPECT_EQ(code_of([&] { log.append(said(99, "a", "late")); }), ErrorCode::kNonMonotonicTimestamp);
  EXPECT_EQ(code_of([&] { log.append({1, 100, EventKind::kCharacterGrab, "a", NoPayload{}}); }),
            ErrorCode::kSchemaViolation);
  EXPECT_EQ(code_of([&] { log.append(said(100, "a", "")); }), ErrorCode::kEmptyUtterance);
  EXPECT_EQ(log.events().size(), 1u);
}

TEST(SessionLog, OverrideMarksReplacedLine) {
  SessionLog log("s1", "x", "now");
  log.append(said(0, "a", "first"));
  auto ai = log.append(said(5, "b", "reply", std::nullopt, EventKind::kAIReactiveSpeech)).event_id;
  log.append(said(9, "b", "my own words", ai));
  EXPECT_TRUE(log.is_overridden(ai));
  auto hist = dialogue_history(log);
  ASSERT_EQ(hist.size(), 3u);
  EXPECT_TRUE(hist[1].overridden);
  EXPECT_FALSE(hist[2].overridden);
  EXPECT_EQ(dialogue_history(log, 5).size(), 2u);
}

TEST(SessionLog, SerializationRoundTripsRandomLogs) {
  support::Gen gen(11);
  for (int i = 0; i < 200; ++i) {
    SessionLog log = random_log(gen);
    auto doc = serialize_log(log);
    SessionLog back = deserialize_log(doc);
    ASSERT_EQ(back, log) << doc.dump();
    ASSERT_EQ(serialize_log(back).dump(), doc.dump());
    ASSERT_EQ(back.overridden(), log.overridden());
  }
}

TEST(SessionLog, DeserializeRejectsTampering) {
  SessionLog log("s1", "x", "now");
  log.append(said(100, "a", "hi"));
  auto good = serialize_log(log);

  auto j = good;
  j["extra"] = true;
  EXPECT_EQ(code_of([&] { deserialize_log(j); }), ErrorCode::kSchemaViolation);
  j = good;
  j["metadata"]["interaction_counts"]["UserSpeech"] = 2;
  EXPECT_EQ(code_of([&] { deserialize_log(j); }), ErrorCode::kSchemaViolation);
  j = good;
  j["metadata"]["duration_ms"] = 5;
  EXPECT_EQ(code_of([&] { deserialize_log(j); }), ErrorCode::kSchemaViolation);
  j = good;
  j["events"][0]["kind"] = "Teleport";
  EXPECT_EQ(code_of([&] { deserialize_log(j); }), ErrorCode::kSchemaViolation);
  j = good;
  j["schema_version"] = 2;
  EXPECT_EQ(code_of([&] { deserialize_log(j); }), ErrorCode::kSchemaViolation);
  j = good;
  j["events"][0]["payload"]["text"] = "";
  EXPECT_EQ(code_of([&] { deserialize_log(j); }), ErrorCode::kSchemaViolation);
}

TEST(SessionLog, ErrorsCarryJsonPointer) {
  SessionLog log("s1", "x", "now");
  log.append(said(100, "a", "hi"));
  auto j = serialize_log(log);
  j["events"][0]["payload"]["addressee"] = 3;
  try {
    deserialize_log(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(e.detail().find("/events/0/payload/addressee"), std::string::npos) << e.detail();
  }
}

TEST(SessionLog, BundledSessionDocumentParses) {
  auto log = deserialize_log(support::robinhood_session());
  EXPECT_EQ(log.metadata().duration_ms, 16000);
  EXPECT_EQ(log.metadata().interaction_counts.at(EventKind::kUserSpeech), 8);
  EXPECT_EQ(log.metadata().interaction_counts.at(EventKind::kAIReactiveSpeech), 8);
}
