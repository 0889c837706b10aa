#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagebeat/errors.hpp"
#include "stagebeat/scene_document.hpp"
#include "stagebeat/session.hpp"

namespace stagebeat {

/// Writes `content` next to `path` and renames it into place, so readers
/// only ever see the old file or the complete new one.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kInvalidArgument, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("/: ") + e.what());
  }
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now()) {
  std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

using BackendFactory = std::function<std::shared_ptr<GenerationBackend>(const SceneFixture&)>;

/// Owns live sessions. Every session has its own lock; `with` runs a
/// callback under it. Documents are written atomically after each change
/// when a store directory is set.
class SessionManager {
 public:
  struct Entry {
    std::mutex mu;
    std::unique_ptr<Session> session;
    std::chrono::steady_clock::time_point started;
  };

  SessionManager(FixtureCatalog catalog, EngineConfig cfg, BackendFactory factory = nullptr,
                 std::optional<std::filesystem::path> store = std::nullopt)
      : catalog_(std::move(catalog)), cfg_(cfg), factory_(std::move(factory)), store_(std::move(store)) {}

  const FixtureCatalog& catalog() const { return catalog_; }
  const EngineConfig& config() const { return cfg_; }

  std::string create(const std::string& fixture_id, bool inline_generation = true) {
    const SceneFixture& f = catalog_.get(fixture_id);
    auto backend = factory_ ? factory_(f) : nullptr;
    std::lock_guard lk(mu_);
    std::string id = "s" + std::to_string(next_id_++);
    while (sessions_.count(id)) id = "s" + std::to_string(next_id_++);
    auto e = std::make_shared<Entry>();
    e->session = std::make_unique<Session>(id, f, cfg_, std::move(backend), utc_timestamp());
    e->session->set_inline_generation(inline_generation);
    e->started = std::chrono::steady_clock::now();
    sessions_[id] = e;
    persist_locked(*e);
    return id;
  }

  /// Restores every document in the store directory. Returns how many.
  std::size_t load_store(bool inline_generation = true) {
    if (!store_ || !std::filesystem::is_directory(*store_)) return 0;
    std::size_t n = 0;
    for (const auto& de : std::filesystem::directory_iterator(*store_)) {
      if (de.path().extension() != ".json") continue;
      auto doc = read_json_file(de.path());
      auto fixture = fixture_from_json(doc.at("scene"), "/scene");
      auto s = Session::restore(doc, std::nullopt, factory_ ? factory_(fixture) : nullptr);
      if (s->status() == SessionStatus::kClosed) continue;
      s->set_inline_generation(inline_generation);
      auto e = std::make_shared<Entry>();
      e->started = std::chrono::steady_clock::now() - std::chrono::milliseconds(s->now());
      e->session = std::move(s);
      std::lock_guard lk(mu_);
      sessions_[e->session->id()] = e;
      ++n;
    }
    return n;
  }

  template <typename F>
  auto with(const std::string& id, F&& f) {
    auto e = entry(id);
    std::lock_guard lk(e->mu);
    if constexpr (std::is_void_v<decltype(f(*e->session))>) {
      f(*e->session);
      persist_locked(*e);
    } else {
      auto r = f(*e->session);
      persist_locked(*e);
      return r;
    }
  }

  /// Like `with`, without writing the document.
  template <typename F>
  auto with_quiet(const std::string& id, F&& f) {
    auto e = entry(id);
    std::lock_guard lk(e->mu);
    return f(*e->session);
  }

  void persist(const std::string& id) {
    auto e = entry(id);
    std::lock_guard lk(e->mu);
    persist_locked(*e);
  }

  /// Read-only access; skips persistence.
  template <typename F>
  auto peek(const std::string& id, F&& f) {
    auto e = entry(id);
    std::lock_guard lk(e->mu);
    return f(static_cast<const Session&>(*e->session));
  }

  /// Milliseconds since the session started, by the wall clock.
  Millis elapsed(const std::string& id) {
    auto e = entry(id);
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - e->started)
        .count();
  }

  /// Closes the session, writes its final document and forgets it.
  void close(const std::string& id) {
    auto e = entry(id);
    {
      std::lock_guard lk(e->mu);
      e->session->close();
      persist_locked(*e);
    }
    std::lock_guard lk(mu_);
    sessions_.erase(id);
  }

  std::vector<std::string> ids() const {
    std::lock_guard lk(mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : sessions_) out.push_back(k);
    return out;
  }

  std::optional<std::filesystem::path> document_path(const std::string& id) const {
    if (!store_) return std::nullopt;
    return *store_ / (id + ".json");
  }

 private:
  std::shared_ptr<Entry> entry(const std::string& id) {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::kUnknownSession, id);
    return it->second;
  }

  void persist_locked(Entry& e) {
    if (!store_) return;
    write_atomic(*store_ / (e.session->id() + ".json"), e.session->document().dump(2));
  }

  FixtureCatalog catalog_;
  EngineConfig cfg_;
  BackendFactory factory_;
  std::optional<std::filesystem::path> store_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace stagebeat
