#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "stagebeat/session.hpp"
#include "stagebeat/session_manager.hpp"

namespace stagebeat {

struct ReplayArtifacts {
  nlohmann::json frames = nlohmann::json::array();
  nlohmann::json marbles = nlohmann::json::array();
  std::string synopsis;
  std::string screenplay;
  nlohmann::json screenplay_doc;
  nlohmann::json continuity = nlohmann::json::array();
};

/// Re-runs a session document offline: every logged event goes through the
/// pipeline with generation off, play ends at the logged duration, and the
/// artifacts are built with the seeded backend. Deterministic.
inline std::unique_ptr<Session> replay_document(const nlohmann::json& doc,
                                                std::optional<EngineConfig> cfg = std::nullopt) {
  nlohmann::json fresh = doc;
  // A replay starts from the log alone; derived sections are rebuilt.
  fresh["status"] = "Active";
  fresh.erase("intent_frames");
  fresh.erase("timeline");
  fresh.erase("marbles");
  if (!cfg && fresh.contains("config")) {
    try {
      cfg = config_from_json(fresh["config"]);
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchemaViolation, "/config" + e.detail());
    }
  }
  if (cfg) cfg->backend = BackendKind::kDeterministic;
  auto s = Session::restore(fresh, cfg.value_or(EngineConfig{}));
  s->set_generation(false);
  s->end_play(s->log().metadata().duration_ms);
  return s;
}

inline ReplayArtifacts replay_artifacts(Session& s) {
  ReplayArtifacts a;
  for (const auto& f : s.frames()) a.frames.push_back(frame_to_json(f));
  a.marbles = timeline_to_json(s.timeline());
  auto out = s.export_artifacts();
  a.synopsis = out["synopsis"].get<std::string>();
  a.screenplay = out["screenplay"].get<std::string>();
  a.screenplay_doc = out["screenplay_doc"];
  a.continuity = out["continuity"];
  return a;
}

/// Session document in, artifacts out.
inline ReplayArtifacts replay_cli(const nlohmann::json& doc, std::optional<EngineConfig> cfg = std::nullopt) {
  auto s = replay_document(doc, cfg);
  return replay_artifacts(*s);
}

/// Writes frames.json, marbles.json, synopsis.txt, screenplay.fountain and
/// screenplay.json into `dir`.
inline void write_artifacts(const ReplayArtifacts& a, const std::filesystem::path& dir) {
  write_atomic(dir / "frames.json", a.frames.dump(2) + "\n");
  write_atomic(dir / "marbles.json", a.marbles.dump(2) + "\n");
  write_atomic(dir / "synopsis.txt", a.synopsis + "\n");
  write_atomic(dir / "screenplay.fountain", a.screenplay);
  write_atomic(dir / "screenplay.json", a.screenplay_doc.dump(2) + "\n");
}

}  // namespace stagebeat
