#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "stagebeat/errors.hpp"
#include "stagebeat/session.hpp"
#include "stagebeat/session_manager.hpp"

namespace stagebeat::service {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

/// kWall: the server clock stamps every interaction and ticks sessions on
/// its own. kClient: envelope timestamps are used as given and time only
/// moves with client messages (tests, scripted clients).
enum class ClockMode { kWall, kClient };

struct HttpReply {
  unsigned status = 200;
  nlohmann::json body;
};

inline unsigned http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownSession:
    case ErrorCode::kUnknownFixture:
    case ErrorCode::kUnknownMarble:
      return 404;
    case ErrorCode::kWrongPhase:
    case ErrorCode::kOutOfOrder:
      return 409;
    case ErrorCode::kBackendFailure:
      return 502;
    default:
      return 400;
  }
}

inline HttpReply error_reply(const Error& e) {
  return {http_status_for(e.code()), {{"error", std::string(to_string(e.code()))}, {"detail", e.detail()}}};
}

class Service;

/// One WebSocket subscriber to a session's message stream.
class StreamConnection : public std::enable_shared_from_this<StreamConnection> {
 public:
  StreamConnection(tcp::socket&& socket, std::shared_ptr<Service> service, std::string session_id)
      : ws_(std::move(socket)), service_(std::move(service)), session_id_(std::move(session_id)) {}

  template <typename Body, typename Allocator>
  void accept(http::request<Body, http::basic_fields<Allocator>> req);

  /// Queues a text frame. Call on the io thread.
  void send(std::string text) {
    outq_.push_back(std::move(text));
    if (outq_.size() == 1) write_next();
  }

  const std::string& session_id() const { return session_id_; }

 private:
  void read_next() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec);

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(outq_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->outq_.pop_front();
      if (!self->outq_.empty()) self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buf_;
  std::deque<std::string> outq_;
  std::shared_ptr<Service> service_;
  std::string session_id_;
};

/// Routes HTTP requests and stream messages onto sessions. All session
/// work runs on the io thread; replies are generated on a worker pool and
/// posted back.
class Service : public std::enable_shared_from_this<Service> {
 public:
  Service(net::io_context& ioc, SessionManager& sessions, ClockMode mode = ClockMode::kWall,
          std::size_t workers = 2)
      : ioc_(ioc), sessions_(sessions), mode_(mode), pool_(workers), ticker_(ioc) {}

  ~Service() {
    pool_.stop();
    pool_.join();
  }

  SessionManager& sessions() { return sessions_; }
  ClockMode mode() const { return mode_; }

  // --- HTTP ------------------------------------------------------------------------------

  HttpReply route(http::verb method, const std::string& target, const std::string& body) {
    static const std::regex kSession(R"(^/sessions/([A-Za-z0-9_-]+)(/[a-z]+)?$)");
    try {
      std::string path = target.substr(0, target.find('?'));
      if (path == "/fixtures" && method == http::verb::get) return list_fixtures();
      if (path == "/sessions" && method == http::verb::post) return create_session(parse_body(body));
      std::smatch m;
      if (std::regex_match(path, m, kSession)) {
        const std::string id = m[1];
        const std::string tail = m[2];
        if (tail.empty() && method == http::verb::delete_) {
          sessions_.close(id);
          drop_subscribers(id);
          return {200, {{"session_id", id}, {"status", "Closed"}}};
        }
        if (tail == "/messages" && method == http::verb::post) {
          auto j = parse_body(body);
          nlohmann::json out = nlohmann::json::array();
          if (j.is_array()) {
            for (const auto& msg : j)
              for (auto& r : handle_message(id, msg)) out.push_back(std::move(r));
          } else {
            for (auto& r : handle_message(id, j)) out.push_back(std::move(r));
          }
          return {200, out};
        }
        if (tail == "/document" && method == http::verb::get)
          return {200, sessions_.peek(id, [](const Session& s) { return s.document(); })};
        if (tail == "/export" && method == http::verb::post) {
          auto j = body.empty() ? nlohmann::json::object() : parse_body(body);
          std::optional<ExportFormat> format;
          if (j.contains("format")) {
            auto f = j["format"].is_string() ? j["format"].get<std::string>() : "";
            if (f == "Summary") format = ExportFormat::kSummary;
            else if (f == "Screenplay") format = ExportFormat::kScreenplay;
            else if (f != "Both") throw Error(ErrorCode::kSchemaViolation, "/format: expected Summary, Screenplay or Both");
          }
          auto out = sessions_.with(id, [&](Session& s) { return s.export_artifacts(format); });
          broadcast(id, {out});
          return {200, out};
        }
      }
      return {404, {{"error", "NotFound"}, {"detail", target}}};
    } catch (const Error& e) {
      return error_reply(e);
    }
  }

  // --- stream ----------------------------------------------------------------------------

  /// Applies one envelope, fans the results out to every subscriber of the
  /// session and starts any reply it scheduled. Returns the results.
  std::vector<nlohmann::json> handle_message(const std::string& id, nlohmann::json msg) {
    if (mode_ == ClockMode::kWall && msg.is_object() && msg.contains("type")) {
      static const std::set<std::string> kTimed = {"Grab", "Release", "Move", "Attach", "Speak", "EndPlay"};
      if (msg["type"].is_string() && kTimed.count(msg["type"].get<std::string>())) {
        Millis wall = sessions_.elapsed(id);
        msg["t"] = sessions_.peek(id, [&](const Session& s) { return std::max(wall, s.now()); });
      }
    }
    auto out = sessions_.with(id, [&](Session& s) { return s.ingest(msg); });
    broadcast(id, out);
    pump_replies(id);
    return out;
  }

  void subscribe(const std::string& id, const std::shared_ptr<StreamConnection>& c) {
    subscribers_[id].push_back(c);
  }

  void unsubscribe(const StreamConnection* c) {
    for (auto& [id, list] : subscribers_)
      list.erase(std::remove_if(list.begin(), list.end(),
                                [&](const auto& w) {
                                  auto p = w.lock();
                                  return !p || p.get() == c;
                                }),
                 list.end());
  }

  std::size_t subscriber_count(const std::string& id) {
    auto it = subscribers_.find(id);
    if (it == subscribers_.end()) return 0;
    std::size_t n = 0;
    for (const auto& w : it->second)
      if (!w.expired()) ++n;
    return n;
  }

  /// Wall mode only: ticks every active session on the server clock.
  void start_ticker() {
    if (mode_ != ClockMode::kWall) return;
    ticker_.expires_after(std::chrono::milliseconds(std::max<Millis>(sessions_.config().tick_ms, 10)));
    ticker_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->tick_all();
      self->start_ticker();
    });
  }

  void stop() { ticker_.cancel(); }

  /// Replies in flight on the worker pool.
  std::size_t generating() const { return in_flight_; }

 private:
  static nlohmann::json parse_body(const std::string& body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kSchemaViolation, std::string("/: ") + e.what());
    }
  }

  HttpReply list_fixtures() {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& id : sessions_.catalog().ids()) {
      const auto& f = sessions_.catalog().get(id);
      nlohmann::json cast = nlohmann::json::array();
      for (const auto& c : f.scene.characters) cast.push_back({{"id", c.id}, {"name", c.name}});
      out.push_back({{"fixture_id", f.fixture_id}, {"title", f.title}, {"characters", cast}});
    }
    return {200, out};
  }

  HttpReply create_session(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("fixture_id") || !j["fixture_id"].is_string())
      throw Error(ErrorCode::kSchemaViolation, "/fixture_id: expected string");
    std::string id = sessions_.create(j["fixture_id"].get<std::string>(), false);
    auto scene = sessions_.peek(id, [](const Session& s) { return live_scene_to_json(s.scene()); });
    return {201, {{"session_id", id}, {"status", "Active"}, {"scene", scene}}};
  }

  void broadcast(const std::string& id, const std::vector<nlohmann::json>& msgs) {
    auto it = subscribers_.find(id);
    if (it == subscribers_.end() || msgs.empty()) return;
    for (const auto& w : it->second)
      if (auto c = w.lock())
        for (const auto& m : msgs) c->send(m.dump());
  }

  void drop_subscribers(const std::string& id) { subscribers_.erase(id); }

  void tick_all() {
    for (const auto& id : sessions_.ids()) {
      try {
        Millis wall = sessions_.elapsed(id);
        auto out = sessions_.with_quiet(id, [&](Session& s) -> std::vector<nlohmann::json> {
          if (s.status() != SessionStatus::kActive || wall <= s.now()) return {};
          return s.tick(wall);
        });
        if (!out.empty()) {
          sessions_.persist(id);
          broadcast(id, out);
        }
        pump_replies(id);
      } catch (const Error&) {
        // Session closed between listing and ticking.
      }
    }
  }

  void pump_replies(const std::string& id) {
    std::optional<ReplyTicket> ticket;
    std::shared_ptr<GenerationBackend> backend;
    sessions_.with_quiet(id, [&](Session& s) {
      ticket = s.take_reply_ticket();
      if (ticket) backend = s.shared_backend();
    });
    if (!ticket) return;
    ++in_flight_;
    // The pool never owns the service, so it can be joined from ~Service.
    net::post(pool_, [weak = weak_from_this(), &ioc = ioc_, id, t = *ticket, backend] {
      std::string text;
      try {
        text = backend->generate(t.request);
      } catch (const std::exception&) {
        text.clear();
      }
      net::post(ioc, [weak, id, t, text] {
        if (auto self = weak.lock()) self->finish_reply(id, t, text);
      });
    });
  }

  void finish_reply(const std::string& id, const ReplyTicket& t, const std::string& text) {
    --in_flight_;
    try {
      auto out = sessions_.with(id, [&](Session& s) {
        Millis at = mode_ == ClockMode::kWall ? std::max(sessions_.elapsed(id), s.now()) : s.now();
        return s.complete_reply(t, text, at);
      });
      broadcast(id, out);
    } catch (const Error&) {
      // Session was closed while the reply was being generated.
    }
  }

  net::io_context& ioc_;
  SessionManager& sessions_;
  ClockMode mode_;
  net::thread_pool pool_;
  net::steady_timer ticker_;
  std::map<std::string, std::vector<std::weak_ptr<StreamConnection>>> subscribers_;
  std::size_t in_flight_ = 0;
};

template <typename Body, typename Allocator>
void StreamConnection::accept(http::request<Body, http::basic_fields<Allocator>> req) {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->service_->subscribe(self->session_id_, self);
    self->read_next();
  });
}

inline void StreamConnection::on_read(beast::error_code ec) {
  if (ec) {
    service_->unsubscribe(this);
    return;
  }
  std::string data = beast::buffers_to_string(buf_.data());
  buf_.consume(buf_.size());
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(data);
  } catch (const nlohmann::json::parse_error& e) {
    send(error_message(std::nullopt, ErrorCode::kSchemaViolation, std::string("/: ") + e.what()).dump());
    read_next();
    return;
  }
  try {
    service_->handle_message(session_id_, std::move(msg));
  } catch (const Error& e) {
    send(error_message(std::nullopt, e.code(), e.detail()).dump());
  }
  read_next();
}

/// Plain HTTP connection; hands off to a StreamConnection on upgrade.
class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, std::shared_ptr<Service> service)
      : stream_(std::move(socket)), service_(std::move(service)) {}

  void start() { read_next(); }

 private:
  void read_next() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    static const std::regex kStream(R"(^/sessions/([A-Za-z0-9_-]+)/stream$)");
    std::smatch m;
    std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (std::regex_match(target, m, kStream) && session_exists(m[1])) {
        stream_.expires_never();
        std::make_shared<StreamConnection>(stream_.release_socket(), service_, m[1])->accept(std::move(req_));
        return;
      }
      respond({404, {{"error", "NotFound"}, {"detail", target}}});
      return;
    }
    respond(service_->route(req_.method(), target, req_.body()));
  }

  bool session_exists(const std::string& id) {
    try {
      service_->sessions().peek(id, [](const Session&) { return true; });
      return true;
    } catch (const Error&) {
      return false;
    }
  }

  void respond(const HttpReply& r) {
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(r.status),
                                                                   req_.version());
    res->set(http::field::server, "stagebeat");
    res->set(http::field::content_type, "application/json");
    res->keep_alive(req_.keep_alive());
    res->body() = r.body.is_null() ? "" : r.body.dump();
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read_next();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  std::shared_ptr<Service> service_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(net::io_context& ioc, tcp::endpoint endpoint, std::shared_ptr<Service> service)
      : ioc_(ioc), acceptor_(ioc), service_(std::move(service)) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() { accept_next(); }

  void stop() {
    beast::error_code ignored;
    acceptor_.close(ignored);
  }

 private:
  void accept_next() {
    acceptor_.async_accept(net::make_strand(ioc_), [self = shared_from_this()](beast::error_code ec, tcp::socket s) {
      if (ec) return;
      std::make_shared<HttpConnection>(std::move(s), self->service_)->start();
      self->accept_next();
    });
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  std::shared_ptr<Service> service_;
};

}  // namespace stagebeat::service
