#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stagebeat/backend.hpp"
#include "stagebeat/config.hpp"
#include "stagebeat/errors.hpp"
#include "stagebeat/text.hpp"

namespace stagebeat {

/// Chat-completions client for an OpenAI-compatible HTTP endpoint.
/// `endpoint` is the API base, e.g. "http://localhost:8080/v1".
class RemoteBackend final : public GenerationBackend {
 public:
  explicit RemoteBackend(RemoteSettings settings, std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : settings_(std::move(settings)), timeout_(timeout) {
    auto& ep = settings_.endpoint;
    auto scheme = ep.find("://");
    if (scheme == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "endpoint needs a scheme: " + ep);
    if (ep.compare(0, scheme, "http") != 0)
      throw Error(ErrorCode::kInvalidArgument, "only plain http endpoints are supported: " + ep);
    auto slash = ep.find('/', scheme + 3);
    host_ = ep.substr(0, slash);
    base_path_ = slash == std::string::npos ? "" : ep.substr(slash);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  }

  std::string generate(const GenerationRequest& request) override {
    std::string user = request.context_block;
    if (!request.cue_line.empty()) user += "\n\n" + request.addressee_name + " says: " + request.cue_line;
    user += "\n\nReply as " + request.speaker_name + " with one line of dialogue.";
    auto reply = text::trim(complete(request.system_prompt, user, 120));
    if (reply.empty()) throw Error(ErrorCode::kMalformedBackendReply, "empty completion");
    // Models sometimes prefix the speaker name; keep only the line.
    std::string prefix = request.speaker_name + ":";
    if (reply.rfind(prefix, 0) == 0) reply = text::trim(reply.substr(prefix.size()));
    return reply;
  }

  std::vector<std::string> analyze(const std::string& prompt) override {
    return text::split_lines(complete("Answer exactly in the requested line format.", prompt, 400));
  }

  std::string name() const override { return "remote:" + settings_.model; }

  const std::string& host() const { return host_; }
  const std::string& base_path() const { return base_path_; }

 private:
  std::string complete(const std::string& system, const std::string& user, int max_tokens) {
    nlohmann::json body = {{"model", settings_.model},
                           {"max_tokens", max_tokens},
                           {"temperature", 0.7},
                           {"messages",
                            {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}}}};
    httplib::Client cli(host_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    cli.set_connection_timeout(secs);
    cli.set_read_timeout(secs);
    httplib::Headers headers;
    if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);
    auto res = cli.Post(base_path_ + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::kBackendFailure, "request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::kBackendFailure, "status " + std::to_string(res->status));
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kMalformedBackendReply, e.what());
    }
  }

  RemoteSettings settings_;
  std::chrono::milliseconds timeout_;
  std::string host_;
  std::string base_path_;
};

/// Backend named by the config: the seeded offline backend, or the remote
/// one when configured and the environment provides an endpoint.
inline std::shared_ptr<GenerationBackend> make_backend(const EngineConfig& cfg, const BackendSeed& seed) {
  if (cfg.backend == BackendKind::kRemote) {
    auto settings = remote_settings_from_env();
    if (!settings) throw Error(ErrorCode::kInvalidArgument, "remote backend needs STAGEBEAT_REMOTE_ENDPOINT");
    return std::make_shared<RemoteBackend>(*settings);
  }
  return std::make_shared<DeterministicBackend>(seed);
}

}  // namespace stagebeat
