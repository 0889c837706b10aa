// stagebeat: serve | replay | export | fixtures

#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "stagebeat/remote_backend.hpp"
#include "stagebeat/replay.hpp"
#include "stagebeat/service/server.hpp"

namespace fs = std::filesystem;
using namespace stagebeat;

#ifndef STAGEBEAT_DATA_DIR
#define STAGEBEAT_DATA_DIR "data"
#endif

namespace {

std::optional<EngineConfig> maybe_config(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_config_file(path);
}

int run_serve(const std::string& host, unsigned short port, const std::string& fixtures,
              const std::string& store, const std::string& config, const std::string& clock) {
  EngineConfig cfg = maybe_config(config).value_or(EngineConfig{});
  BackendFactory factory = [cfg](const SceneFixture& f) { return make_backend(cfg, f.seed); };
  std::optional<fs::path> store_dir;
  if (!store.empty()) store_dir = store;
  SessionManager sessions(FixtureCatalog::load_dir(fixtures), cfg, factory, store_dir);
  std::size_t restored = sessions.load_store(false);

  service::net::io_context ioc{1};
  auto mode = clock == "client" ? service::ClockMode::kClient : service::ClockMode::kWall;
  auto svc = std::make_shared<service::Service>(ioc, sessions, mode);
  auto listener = std::make_shared<service::Listener>(
      ioc, service::tcp::endpoint{service::net::ip::make_address(host), port}, svc);
  listener->start();
  svc->start_ticker();

  service::net::signal_set signals(ioc, SIGINT, SIGTERM);
  signals.async_wait([&](const boost::system::error_code&, int) {
    listener->stop();
    svc->stop();
    ioc.stop();
  });
  std::cerr << "stagebeat listening on " << host << ":" << listener->port() << " (" << restored
            << " sessions restored)\n";
  ioc.run();
  return 0;
}

int run_replay(const std::string& input, const std::string& out, const std::string& config) {
  auto artifacts = replay_cli(read_json_file(input), maybe_config(config));
  write_artifacts(artifacts, out);
  std::cout << artifacts.frames.size() << " frames, " << artifacts.marbles.size() << " marbles -> " << out
            << "\n";
  return 0;
}

int run_export(const std::string& input, const std::string& format, const std::string& config) {
  auto a = replay_cli(read_json_file(input), maybe_config(config));
  if (format == "summary" || format == "both") std::cout << a.synopsis << "\n";
  if (format == "both") std::cout << "\n";
  if (format == "screenplay" || format == "both") std::cout << a.screenplay;
  for (const auto& note : a.continuity) std::cerr << "continuity: " << note["message"].get<std::string>() << "\n";
  return 0;
}

int run_fixtures(const std::string& dir) {
  auto catalog = FixtureCatalog::load_dir(dir);
  for (const auto& id : catalog.ids()) {
    const auto& f = catalog.get(id);
    std::cout << id << "\t" << f.title << "\t";
    for (std::size_t i = 0; i < f.scene.characters.size(); ++i)
      std::cout << (i ? ", " : "") << f.scene.characters[i].name;
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stagebeat: embodied story authoring engine"};
  app.require_subcommand(1);
  std::string fixtures = std::string(STAGEBEAT_DATA_DIR) + "/fixtures";
  std::string config;

  auto* serve = app.add_subcommand("serve", "run the WebSocket/HTTP session service");
  std::string host = "127.0.0.1", store, clock = "wall";
  unsigned short port = 8080;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "listen port (0 picks one)");
  serve->add_option("--fixtures", fixtures, "scene fixture directory");
  serve->add_option("--store", store, "directory for session documents");
  serve->add_option("--config", config, "engine config JSON");
  serve->add_option("--clock", clock, "wall or client")->check(CLI::IsMember({"wall", "client"}));

  auto* replay = app.add_subcommand("replay", "re-run a session log offline and write artifacts");
  std::string input, out = "replay_out";
  replay->add_option("--input,input", input, "session document")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", out, "output directory");
  replay->add_option("--config", config, "engine config JSON")->check(CLI::ExistingFile);

  auto* exp = app.add_subcommand("export", "print the synopsis and/or screenplay of a session log");
  std::string format = "both";
  exp->add_option("--input,input", input, "session document")->required()->check(CLI::ExistingFile);
  exp->add_option("--format", format, "summary, screenplay or both")
      ->check(CLI::IsMember({"summary", "screenplay", "both"}));
  exp->add_option("--config", config, "engine config JSON")->check(CLI::ExistingFile);

  auto* fx = app.add_subcommand("fixtures", "list bundled scenes");
  fx->add_option("--dir", fixtures, "scene fixture directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*serve) return run_serve(host, port, fixtures, store, config, clock);
    if (*replay) return run_replay(input, out, config);
    if (*exp) return run_export(input, format, config);
    if (*fx) return run_fixtures(fixtures);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.detail() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
