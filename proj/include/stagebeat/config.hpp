#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "stagebeat/errors.hpp"
#include "stagebeat/geometry.hpp"

namespace stagebeat {

struct FusionWeights {
  double w_e = 1.0 / 3.0;
  double w_s = 1.0 / 3.0;
  double w_n = 1.0 / 3.0;

  double sum() const { return w_e + w_s + w_n; }
  friend bool operator==(const FusionWeights&, const FusionWeights&) = default;
};

enum class BackendKind { kDeterministic, kRemote };

/// Every tunable in the pipeline. Defaults are the documented values; the
/// JSON form uses the same names (with the first seven keys as listed in
/// docs/config.md) and rejects unknown keys.
struct EngineConfig {
  // Commit queue.
  int n_commit = 5;
  Millis t_commit_ms = 1000;
  // Dialogue timing.
  Millis proactive_ms = 10000;
  // Observation thresholds.
  Millis social_cooldown_ms = 5000;
  double movement_threshold_m = 0.5;
  double interaction_radius_m = 0.5;
  double social_novel = 1.0;
  double social_repeat = 0.2;
  double zone_salience = 1.0;
  double proximity_salience = 0.8;
  std::size_t trail_capacity = 32;
  // Fusion.
  FusionWeights weights;
  Millis dedup_window_ms = 500;
  Millis cooccurrence_window_ms = 1000;
  double salience_floor = 0.1;
  double env_down_multiplier = 0.8;
  double social_up_multiplier = 1.25;
  std::size_t weight_history = 10;
  double min_weight = 0.05;
  // Prompting.
  std::size_t token_budget = 1024;
  BackendKind backend = BackendKind::kDeterministic;
  // Session clock.
  Millis tick_ms = 100;
  Millis session_length_ms = 600000;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

namespace config_detail {

[[noreturn]] inline void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::kSchemaViolation, "/" + key + ": " + why);
}

inline double number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "expected number");
  double d = v.get<double>();
  if (!std::isfinite(d)) bad(key, "expected finite number");
  return d;
}

inline long long integer(const nlohmann::json& v, const std::string& key, long long min) {
  if (!v.is_number_integer()) bad(key, "expected integer");
  long long i = v.get<long long>();
  if (i < min) bad(key, "must be >= " + std::to_string(min));
  return i;
}

inline double unit(const nlohmann::json& v, const std::string& key) {
  double d = number(v, key);
  if (d < 0.0 || d > 1.0) bad(key, "must lie in [0, 1]");
  return d;
}

inline double positive(const nlohmann::json& v, const std::string& key) {
  double d = number(v, key);
  if (d <= 0.0) bad(key, "must be > 0");
  return d;
}

}  // namespace config_detail

inline std::string to_string(BackendKind b) {
  return b == BackendKind::kRemote ? "remote" : "deterministic";
}

inline EngineConfig config_from_json(const nlohmann::json& doc) {
  using namespace config_detail;
  if (!doc.is_object()) throw Error(ErrorCode::kSchemaViolation, "/: expected object");
  EngineConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (key == "N_commit") c.n_commit = static_cast<int>(integer(v, key, 1));
    else if (key == "T_commit_ms") c.t_commit_ms = integer(v, key, 1);
    else if (key == "proactive_ms") c.proactive_ms = integer(v, key, 1);
    else if (key == "social_cooldown_ms") c.social_cooldown_ms = integer(v, key, 0);
    else if (key == "movement_threshold_m") c.movement_threshold_m = positive(v, key);
    else if (key == "interaction_radius_m") c.interaction_radius_m = positive(v, key);
    else if (key == "social_novel") c.social_novel = unit(v, key);
    else if (key == "social_repeat") c.social_repeat = unit(v, key);
    else if (key == "zone_salience") c.zone_salience = unit(v, key);
    else if (key == "proximity_salience") c.proximity_salience = unit(v, key);
    else if (key == "trail_capacity") c.trail_capacity = static_cast<std::size_t>(integer(v, key, 1));
    else if (key == "weights") {
      if (!v.is_object()) bad(key, "expected object");
      for (const auto& [wk, wv] : v.items()) {
        if (wk == "w_e") c.weights.w_e = unit(wv, "weights/w_e");
        else if (wk == "w_s") c.weights.w_s = unit(wv, "weights/w_s");
        else if (wk == "w_n") c.weights.w_n = unit(wv, "weights/w_n");
        else bad("weights/" + wk, "unknown key");
      }
      if (std::abs(c.weights.sum() - 1.0) > 1e-9) bad(key, "must sum to 1");
    } else if (key == "dedup_window_ms") c.dedup_window_ms = integer(v, key, 0);
    else if (key == "cooccurrence_window_ms") c.cooccurrence_window_ms = integer(v, key, 1);
    else if (key == "salience_floor") c.salience_floor = unit(v, key);
    else if (key == "env_down_multiplier") c.env_down_multiplier = positive(v, key);
    else if (key == "social_up_multiplier") c.social_up_multiplier = positive(v, key);
    else if (key == "weight_history") c.weight_history = static_cast<std::size_t>(integer(v, key, 1));
    else if (key == "min_weight") {
      c.min_weight = unit(v, key);
      if (c.min_weight * 3.0 > 1.0) bad(key, "must be <= 1/3");
    } else if (key == "token_budget") {
      c.token_budget = static_cast<std::size_t>(integer(v, key, 512));
    } else if (key == "backend") {
      if (v == "deterministic") c.backend = BackendKind::kDeterministic;
      else if (v == "remote") c.backend = BackendKind::kRemote;
      else bad(key, "expected \"deterministic\" or \"remote\"");
    } else if (key == "tick_ms") c.tick_ms = integer(v, key, 1);
    else if (key == "session_length_ms") c.session_length_ms = integer(v, key, 1);
    else bad(key, "unknown key");
  }
  return c;
}

inline nlohmann::json config_to_json(const EngineConfig& c) {
  return {
      {"N_commit", c.n_commit},
      {"T_commit_ms", c.t_commit_ms},
      {"proactive_ms", c.proactive_ms},
      {"social_cooldown_ms", c.social_cooldown_ms},
      {"movement_threshold_m", c.movement_threshold_m},
      {"interaction_radius_m", c.interaction_radius_m},
      {"social_novel", c.social_novel},
      {"social_repeat", c.social_repeat},
      {"zone_salience", c.zone_salience},
      {"proximity_salience", c.proximity_salience},
      {"trail_capacity", c.trail_capacity},
      {"weights", {{"w_e", c.weights.w_e}, {"w_s", c.weights.w_s}, {"w_n", c.weights.w_n}}},
      {"dedup_window_ms", c.dedup_window_ms},
      {"cooccurrence_window_ms", c.cooccurrence_window_ms},
      {"salience_floor", c.salience_floor},
      {"env_down_multiplier", c.env_down_multiplier},
      {"social_up_multiplier", c.social_up_multiplier},
      {"weight_history", c.weight_history},
      {"min_weight", c.min_weight},
      {"token_budget", c.token_budget},
      {"backend", to_string(c.backend)},
      {"tick_ms", c.tick_ms},
      {"session_length_ms", c.session_length_ms},
  };
}

inline EngineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open config " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("/: ") + e.what());
  }
  return config_from_json(doc);
}

/// Remote backend settings. Read from the environment only.
struct RemoteSettings {
  std::string endpoint;
  std::string model;
  std::string api_key;
};

inline std::optional<RemoteSettings> remote_settings_from_env() {
  auto get = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  RemoteSettings s{get("STAGEBEAT_REMOTE_ENDPOINT"), get("STAGEBEAT_REMOTE_MODEL"),
                   get("STAGEBEAT_API_KEY")};
  if (s.endpoint.empty()) return std::nullopt;
  return s;
}

}  // namespace stagebeat
