#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "stagebeat/remote_backend.hpp"

using namespace stagebeat;

namespace {

// Chat-completions stand-in. `reply` decides status and body per request.
struct MockServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string last_auth;
  nlohmann::json last_body;
  std::function<std::pair<int, std::string>()> reply;

  MockServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth = req.get_header_value("Authorization");
      last_body = nlohmann::json::parse(req.body, nullptr, false);
      auto [status, body] = reply();
      res.status = status;
      res.set_content(body, "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockServer() {
    server.stop();
    thread.join();
  }
  RemoteSettings settings(std::string key = "k-123") const {
    return {"http://127.0.0.1:" + std::to_string(port) + "/v1", "test-model", std::move(key)};
  }
};

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

GenerationRequest dialogue_request() {
  GenerationRequest r;
  r.purpose = RequestPurpose::kDialogue;
  r.system_prompt = "You voice Robin.";
  r.context_block = "SCENE: city hall";
  r.speaker_name = "Robin Hood";
  r.addressee_name = "Mary";
  r.cue_line = "Help us.";
  return r;
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

}  // namespace

TEST(RemoteBackend, SendsChatRequestAndStripsNamePrefix) {
  MockServer mock;
  mock.reply = [] { return std::pair{200, completion("Robin Hood: I will help.")}; };
  RemoteBackend backend(mock.settings());
  EXPECT_EQ(backend.generate(dialogue_request()), "I will help.");
  EXPECT_EQ(mock.last_auth, "Bearer k-123");
  EXPECT_EQ(mock.last_body["model"], "test-model");
  ASSERT_EQ(mock.last_body["messages"].size(), 2u);
  EXPECT_EQ(mock.last_body["messages"][0]["content"], "You voice Robin.");
  EXPECT_NE(mock.last_body["messages"][1]["content"].get<std::string>().find("Mary says: Help us."),
            std::string::npos);
}

TEST(RemoteBackend, NoKeyNoHeader) {
  MockServer mock;
  mock.reply = [] { return std::pair{200, completion("Fine.")}; };
  RemoteBackend backend(mock.settings(""));
  EXPECT_EQ(backend.generate(dialogue_request()), "Fine.");
  EXPECT_TRUE(mock.last_auth.empty());
}

TEST(RemoteBackend, AnalyzeSplitsLines) {
  MockServer mock;
  mock.reply = [] { return std::pair{200, completion("Summary: x\nTone: y")}; };
  RemoteBackend backend(mock.settings());
  auto lines = backend.analyze("classify");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1], "Tone: y");
}

TEST(RemoteBackend, FailuresMapToErrorCodes) {
  MockServer mock;
  RemoteBackend backend(mock.settings());
  mock.reply = [] { return std::pair{500, std::string("{}")}; };
  EXPECT_EQ(code_of([&] { backend.generate(dialogue_request()); }), ErrorCode::kBackendFailure);
  mock.reply = [] { return std::pair{200, std::string("not json")}; };
  EXPECT_EQ(code_of([&] { backend.generate(dialogue_request()); }), ErrorCode::kMalformedBackendReply);
  mock.reply = [] { return std::pair{200, std::string(R"({"choices": []})")}; };
  EXPECT_EQ(code_of([&] { backend.generate(dialogue_request()); }), ErrorCode::kMalformedBackendReply);
  mock.reply = [] { return std::pair{200, completion("   ")}; };
  EXPECT_EQ(code_of([&] { backend.generate(dialogue_request()); }), ErrorCode::kMalformedBackendReply);
}

TEST(RemoteBackend, UnreachableHostIsBackendFailure) {
  int port;
  {
    MockServer mock;  // grab a free port, then let it go
    port = mock.port;
  }
  RemoteBackend backend({"http://127.0.0.1:" + std::to_string(port) + "/v1", "m", ""}, std::chrono::seconds(1));
  EXPECT_EQ(code_of([&] { backend.generate(dialogue_request()); }), ErrorCode::kBackendFailure);
}

TEST(RemoteBackend, EndpointValidation) {
  EXPECT_EQ(code_of([] { RemoteBackend({"https://api.example.com/v1", "m", ""}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { RemoteBackend({"localhost:8080", "m", ""}); }), ErrorCode::kInvalidArgument);
  RemoteBackend b({"http://localhost:8080/v1/", "m", ""});
  EXPECT_EQ(b.host(), "http://localhost:8080");
  EXPECT_EQ(b.base_path(), "/v1");
}

TEST(RemoteBackend, FactoryPicksDeterministicByDefault) {
  EngineConfig cfg;
  EXPECT_EQ(make_backend(cfg, {})->name(), "deterministic");
}
