#include <cmath>

#include <gtest/gtest.h>

#include "stagebeat/replay.hpp"
#include "stagebeat/scene.hpp"
#include "support.hpp"

using namespace stagebeat;
using support::person;
using support::stage;
using support::thing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

SceneState duo() {
  return stage({person("a", "Ann", {0, 0, 0}, {1, 0, 0}), person("b", "Bob", {1, 0, 0}, {-1, 0, 0})},
               {thing("cup", "cup", {0.1, 0, 0.2})});
}

// Hand point computed from first principles: right = (-fz, 0, fx).
Vec3 hand_oracle(const Character& c, Hand h) {
  Vec3 right{-c.facing.z, 0.0, c.facing.x};
  double side = h == Hand::kRight ? 0.2 : -0.2;
  return {c.position.x + right.x * side + c.facing.x * 0.1, c.position.y + c.facing.y * 0.1,
          c.position.z + right.z * side + c.facing.z * 0.1};
}

}  // namespace

TEST(SceneFixture, RobinHoodStageLoads) {
  const auto& f = support::robinhood();
  ASSERT_EQ(f.scene.characters.size(), 3u);
  EXPECT_NE(f.scene.find_character("robin"), nullptr);
  EXPECT_NE(f.scene.find_character("mary"), nullptr);
  EXPECT_NE(f.scene.find_character("pemberton"), nullptr);
  for (const char* p : {"gold", "pistol", "chalice"}) EXPECT_NE(f.scene.find_prop(p), nullptr) << p;
  EXPECT_TRUE(f.scene.find_prop("pistol")->has_tag("weapon"));
  EXPECT_EQ(check_invariants(f.scene), "");
  for (const auto& c : f.scene.characters) EXPECT_EQ(c.state, CharacterState::kIdle);
}

TEST(SceneFixture, CatalogListsAllFixtures) {
  auto ids = support::catalog().ids();
  EXPECT_EQ(ids, (std::vector<std::string>{"aladdin", "robinhood", "tutorial"}));
  EXPECT_EQ(code_of([] { support::catalog().get("atlantis"); }), ErrorCode::kUnknownFixture);
}

TEST(SceneFixture, JsonRoundTrip) {
  for (const auto& id : support::catalog().ids()) {
    const auto& f = support::catalog().get(id);
    auto back = fixture_from_json(fixture_to_json(f));
    EXPECT_EQ(back.scene, f.scene) << id;
    EXPECT_EQ(back.roles, f.roles) << id;
    EXPECT_EQ(back.preamble, f.preamble) << id;
  }
}

TEST(SceneFixture, RejectsUnknownFieldAndBrokenInvariant) {
  auto j = fixture_to_json(support::robinhood());
  j["surprise"] = 1;
  EXPECT_EQ(code_of([&] { fixture_from_json(j); }), ErrorCode::kSchemaViolation);
  j = fixture_to_json(support::robinhood());
  j["characters"][0]["position"] = {9.0, 0.0, 0.0};
  EXPECT_EQ(code_of([&] { fixture_from_json(j); }), ErrorCode::kSchemaViolation);
}

TEST(SceneMutation, GrabAndReleaseRules) {
  auto s = duo();
  auto g = grab_character(s, "a", 10);
  EXPECT_EQ(g.scene.character("a").state, CharacterState::kHeldByUser);
  EXPECT_EQ(g.event.kind, EventKind::kCharacterGrab);
  EXPECT_EQ(code_of([&] { grab_character(g.scene, "b", 11); }), ErrorCode::kAlreadyHeld);
  EXPECT_EQ(code_of([&] { release_character(g.scene, "b", 11); }), ErrorCode::kNotHeld);
  EXPECT_EQ(code_of([&] { grab_character(s, "zed", 11); }), ErrorCode::kUnknownCharacter);
  auto r = release_character(g.scene, "a", 20);
  EXPECT_EQ(r.scene.character("a").state, CharacterState::kIdle);
  EXPECT_EQ(code_of([&] { release_character(r.scene, "a", 5); }), ErrorCode::kNotHeld);
  EXPECT_EQ(code_of([&] { grab_character(r.scene, "a", 5); }), ErrorCode::kNonMonotonicTimestamp);
}

TEST(SceneMutation, HeldCharacterCannotBeDragged) {
  auto held = grab_character(duo(), "a", 0).scene;
  EXPECT_EQ(code_of([&] { move_character(held, "a", {0.5, 0, 0.5}, 1); }), ErrorCode::kHeldCharacterCannotMove);
}

TEST(SceneMutation, MoveTurnsTowardTravelAndClamps) {
  auto m = move_character(duo(), "a", {0, 0, 1.5}, 5);
  const auto& a = m.scene.character("a");
  EXPECT_DOUBLE_EQ(a.position.z, 1.5);
  EXPECT_NEAR(a.facing.z, 1.0, 1e-12);
  EXPECT_EQ(m.event.movement().from, (Vec3{0, 0, 0}));
  auto far = move_character(duo(), "a", {7, 3, -9}, 5).scene;
  EXPECT_EQ(far.character("a").position, (Vec3{2, 1, -2}));
  auto same = move_character(duo(), "a", {0, 0, 0}, 5).scene;
  EXPECT_EQ(same.character("a").facing, (Vec3{1, 0, 0}));
  EXPECT_EQ(code_of([&] { move_character(duo(), "a", {NAN, 0, 0}, 5); }), ErrorCode::kInvalidArgument);
}

TEST(SceneMutation, AttachUsesHandPoint) {
  auto s = duo();
  const auto& ann = s.character("a");
  EXPECT_LT(distance(hand_zone_position(s, ann, Hand::kRight), hand_oracle(ann, Hand::kRight)), 1e-12);
  EXPECT_LT(distance(hand_zone_position(s, ann, Hand::kLeft), hand_oracle(ann, Hand::kLeft)), 1e-12);

  // The cup sits right at the right hand of someone facing +x.
  auto a = attach_prop(s, "cup", "a", Hand::kRight, 3);
  EXPECT_EQ(a.scene.prop("cup").attached_to->character, "a");
  EXPECT_EQ(a.scene.character("a").held_prop, std::optional<std::string>("cup"));
  EXPECT_EQ(code_of([&] { attach_prop(a.scene, "cup", "b", Hand::kLeft, 4); }), ErrorCode::kPropAlreadyAttached);
  EXPECT_EQ(code_of([&] { attach_prop(s, "cup", "a", Hand::kLeft, 3); }), ErrorCode::kOutOfRange);
  EXPECT_EQ(code_of([&] { attach_prop(s, "spoon", "a", Hand::kLeft, 3); }), ErrorCode::kUnknownProp);

  // Attached props ride along.
  auto moved = move_character(a.scene, "a", {-1, 0, 0}, 9).scene;
  const auto& host = moved.character("a");
  EXPECT_LT(distance(moved.prop("cup").position, hand_oracle(host, Hand::kRight)), 1e-12);
  EXPECT_EQ(check_invariants(moved), "");
}

TEST(SceneMutation, AttachRadiusBoundary) {
  auto s = duo();
  Vec3 hand = hand_oracle(s.character("a"), Hand::kRight);
  s.props[0].position = hand + Vec3{0.1499, 0, 0};
  EXPECT_NO_THROW(attach_prop(s, "cup", "a", Hand::kRight, 1));
  s.props[0].position = hand + Vec3{0.1501, 0, 0};
  EXPECT_EQ(code_of([&] { attach_prop(s, "cup", "a", Hand::kRight, 1); }), ErrorCode::kOutOfRange);
}

TEST(SceneQuery, FacingConeAndNearest) {
  auto s = stage({person("a", "Ann", {0, 0, 0}, {1, 0, 0}), person("b", "Bob", {1, 0, 0.9}),
                  person("c", "Cy", {-0.5, 0, 0})});
  // Bob sits at about 42 degrees, inside a 45 degree half angle.
  EXPECT_EQ(faced_character(s, "a"), std::optional<std::string>("b"));
  s.characters[1].position = {1, 0, 1.1};
  EXPECT_EQ(faced_character(s, "a"), std::nullopt);
  EXPECT_EQ(nearest_character(s, "a"), std::optional<std::string>("c"));
  auto alone = stage({person("a", "Ann", {0, 0, 0})});
  EXPECT_EQ(nearest_character(alone, "a"), std::nullopt);
}

TEST(SceneQuery, ZoneMembership) {
  const auto& s = support::robinhood().scene;
  EXPECT_EQ(zone_membership(s, {0.9, 0, -0.25}), (std::vector<std::string>{"sherwood"}));
  EXPECT_TRUE(zone_membership(s, {0, 0, 0}).empty());
}

TEST(SceneProperty, RandomOperationsKeepInvariants) {
  support::Gen gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    SceneState s = support::robinhood().scene;
    Millis t = 0;
    for (int step = 0; step < 60; ++step) {
      t += gen.integer(0, 300);
      const auto who = gen.pick(std::vector<std::string>{"robin", "mary", "pemberton"});
      try {
        switch (gen.integer(0, 3)) {
          case 0: s = move_character(s, who, gen.floor_point(2.5), t).scene; break;
          case 1: s = grab_character(s, who, t).scene; break;
          case 2: s = release_character(s, who, t).scene; break;
          default: {
            const auto& c = s.character(who);
            Vec3 h = hand_zone_position(s, c, Hand::kRight);
            auto& p = s.props[static_cast<std::size_t>(gen.integer(0, 2))];
            if (!p.attached_to && gen.coin(0.3)) p.position = h;
            s = attach_prop(s, p.id, who, Hand::kRight, t).scene;
          }
        }
      } catch (const Error&) {
        // Rejected operations leave the scene untouched.
      }
      ASSERT_EQ(check_invariants(s), "") << "trial " << trial << " step " << step;
      int held = 0;
      for (const auto& c : s.characters) held += c.state == CharacterState::kHeldByUser;
      ASSERT_LE(held, 1);
    }
  }
}

TEST(SceneProperty, LiveSceneIsAFoldOfTheLog) {
  auto s = replay_document(support::robinhood_session());
  SceneState folded = s->fixture().scene;
  for (const auto& ev : s->log().events()) folded = apply_event(folded, ev);
  EXPECT_EQ(folded, s->scene());
}

TEST(SessionIsolation, TwoSessionsDoNotShareState) {
  SessionManager mgr(support::catalog(), {});
  auto a = mgr.create("robinhood");
  auto b = mgr.create("robinhood");
  EXPECT_NE(a, b);
  mgr.with(a, [](Session& s) { s.move("robin", {1, 0, 1}, 100); });
  auto ra = mgr.peek(a, [](const Session& s) { return s.scene().character("robin").position; });
  auto rb = mgr.peek(b, [](const Session& s) { return s.scene().character("robin").position; });
  EXPECT_EQ(ra, (Vec3{1, 0, 1}));
  EXPECT_EQ(rb, support::robinhood().scene.character("robin").position);
  EXPECT_EQ(mgr.peek(b, [](const Session& s) { return s.log().events().size(); }), 0u);
  EXPECT_EQ(code_of([&] { mgr.create("atlantis"); }), ErrorCode::kUnknownFixture);
}
