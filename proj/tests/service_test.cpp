#include <thread>

#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>
#include <httplib.h>

#include "stagebeat/service/server.hpp"
#include "support.hpp"

using namespace stagebeat;
using namespace stagebeat::service;

namespace {

struct Fixture {
  net::io_context ioc;
  SessionManager sessions{support::catalog(), {}};
  std::shared_ptr<Service> svc = std::make_shared<Service>(ioc, sessions, ClockMode::kClient, 1);

  HttpReply call(http::verb v, const std::string& target, const nlohmann::json& body = nullptr) {
    return svc->route(v, target, body.is_null() ? "" : body.dump());
  }
  std::string create() {
    auto r = call(http::verb::post, "/sessions", {{"fixture_id", "robinhood"}});
    EXPECT_EQ(r.status, 201u);
    return r.body["session_id"];
  }
};

}  // namespace

TEST(Routes, FixturesAndSessions) {
  Fixture f;
  auto r = f.call(http::verb::get, "/fixtures");
  EXPECT_EQ(r.status, 200u);
  ASSERT_EQ(r.body.size(), 3u);
  EXPECT_EQ(r.body[1]["fixture_id"], "robinhood");

  auto id = f.create();
  EXPECT_EQ(f.call(http::verb::post, "/sessions", {{"fixture_id", "hamlet"}}).status, 404u);
  EXPECT_EQ(f.svc->route(http::verb::post, "/sessions", "{not json").status, 400u);

  nlohmann::json batch = nlohmann::json::array(
      {{{"seq", 1}, {"type", "Grab"}, {"character", "mary"}, {"t", 100}},
       {{"seq", 2}, {"type", "Move"}, {"character", "robin"}, {"target", {0.8, 0, 0.1}}, {"t", 900}}});
  r = f.call(http::verb::post, "/sessions/" + id + "/messages", batch);
  EXPECT_EQ(r.status, 200u);
  EXPECT_EQ(r.body.back(), (nlohmann::json{{"type", "Ack"}, {"seq", 2}}));

  r = f.call(http::verb::get, "/sessions/" + id + "/document");
  EXPECT_EQ(r.status, 200u);
  EXPECT_EQ(r.body["events"].size(), 2u);
  EXPECT_EQ(r.body["status"], "Active");

  EXPECT_EQ(f.call(http::verb::post, "/sessions/" + id + "/export", {{"format", "Screenplay"}}).status, 409u);
  f.call(http::verb::post, "/sessions/" + id + "/messages", {{"seq", 3}, {"type", "EndPlay"}, {"t", 3000}});
  EXPECT_EQ(f.call(http::verb::post, "/sessions/" + id + "/export", {{"format", "Poem"}}).status, 400u);
  r = f.call(http::verb::post, "/sessions/" + id + "/export", {{"format", "Screenplay"}});
  EXPECT_EQ(r.status, 200u);
  EXPECT_EQ(r.body["type"], "ExportResult");
  EXPECT_TRUE(r.body.contains("screenplay"));
  EXPECT_FALSE(r.body.contains("synopsis"));

  EXPECT_EQ(f.call(http::verb::delete_, "/sessions/" + id).status, 200u);
  EXPECT_EQ(f.call(http::verb::get, "/sessions/" + id + "/document").status, 404u);
  EXPECT_EQ(f.call(http::verb::get, "/nowhere").status, 404u);
  EXPECT_EQ(f.call(http::verb::put, "/sessions").status, 404u);
}

TEST(Routes, ErrorStatuses) {
  EXPECT_EQ(http_status_for(ErrorCode::kUnknownSession), 404u);
  EXPECT_EQ(http_status_for(ErrorCode::kUnknownMarble), 404u);
  EXPECT_EQ(http_status_for(ErrorCode::kWrongPhase), 409u);
  EXPECT_EQ(http_status_for(ErrorCode::kOutOfOrder), 409u);
  EXPECT_EQ(http_status_for(ErrorCode::kBackendFailure), 502u);
  EXPECT_EQ(http_status_for(ErrorCode::kSchemaViolation), 400u);
}

TEST(Live, HttpAndStreamOverOnePort) {
  Fixture f;
  auto id = f.create();
  auto listener = std::make_shared<Listener>(f.ioc, tcp::endpoint(net::ip::make_address("127.0.0.1"), 0), f.svc);
  listener->start();
  std::thread io([&] { f.ioc.run(); });

  httplib::Client http("127.0.0.1", listener->port());
  auto res = http.Get("/fixtures");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body).size(), 3u);

  net::io_context client_ioc;
  websocket::stream<tcp::socket> ws(client_ioc);
  ws.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), listener->port()));
  ws.handshake("127.0.0.1", "/sessions/" + id + "/stream");

  auto read = [&] {
    beast::flat_buffer buf;
    ws.read(buf);
    return nlohmann::json::parse(beast::buffers_to_string(buf.data()));
  };
  ws.write(net::buffer(nlohmann::json{{"seq", 1}, {"type", "Grab"}, {"character", "mary"}, {"t", 100}}.dump()));
  auto m = read();
  EXPECT_EQ(m["type"], "SceneDelta");
  EXPECT_EQ(m["kind"], "CharacterGrab");
  EXPECT_EQ(read(), (nlohmann::json{{"type", "Ack"}, {"seq", 1}}));

  // The reply is generated on the worker pool and arrives on its own.
  ws.write(net::buffer(
      nlohmann::json{{"seq", 2}, {"type", "Speak"}, {"character", "mary"}, {"text", "Robin, help us!"}, {"t", 400}}
          .dump()));
  std::vector<nlohmann::json> speech;
  while (speech.size() < 2) {
    auto msg = read();
    if (msg["type"] == "SpeechEvent") speech.push_back(msg);
  }
  EXPECT_EQ(speech[0]["speaker"], "mary");
  EXPECT_EQ(speech[1]["speaker"], "robin");
  EXPECT_EQ(speech[1]["kind"], "AIReactiveSpeech");

  ws.write(net::buffer(std::string("{broken")));
  EXPECT_EQ(read()["code"], "SchemaViolation");

  // A stream for an unknown session is refused.
  websocket::stream<tcp::socket> bad(client_ioc);
  bad.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), listener->port()));
  beast::error_code ec;
  bad.handshake("127.0.0.1", "/sessions/nope/stream", ec);
  EXPECT_TRUE(ec);

  ws.close(websocket::close_code::normal);
  listener->stop();
  f.ioc.stop();
  io.join();
}
