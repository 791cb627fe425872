#ifndef WIREFORCE_SERVE_SERVER_HPP
#define WIREFORCE_SERVE_SERVER_HPP

// HTTP + WebSocket front end for ServeSession. Everything runs on one
// io_context thread, so session mutations are serialized by construction;
// readers only ever see the immutable snapshot text.
//
// GET /state returns the latest StateUpdate; GET /ws (or any path with an
// upgrade header) opens the duplex session channel; other GETs are served from
// the static directory.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "wireforce/session.hpp"

namespace wireforce::serve {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

struct ServerOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;
  std::chrono::milliseconds heartbeat{1000};
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

inline std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

class Server;

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, Server& server) : ws_(std::move(socket)), timer_(ws_.get_executor()), server_(server) {}

  void run(http::request<http::string_body> req);
  void send(std::shared_ptr<const std::string> text);

 private:
  void on_accept(beast::error_code ec);
  void do_read();
  void on_read(beast::error_code ec, std::size_t);
  void do_write();
  void arm_heartbeat();
  void close();

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  asio::steady_timer timer_;
  std::chrono::steady_clock::time_point last_send_ = std::chrono::steady_clock::now();
  bool open_ = false;
  Server& server_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, Server& server) : stream_(std::move(socket)), server_(server) {}
  void run() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }
  void on_read(beast::error_code ec, std::size_t);
  void respond(http::status status, std::string body, const std::string& type);

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  Server& server_;
};

class Server {
 public:
  Server(asio::io_context& ioc, std::shared_ptr<ServeSession> session, ServerOptions options)
      : ioc_(ioc), acceptor_(ioc), session_(std::move(session)), options_(std::move(options)) {
    const tcp::endpoint endpoint(asio::ip::make_address(options_.host), options_.port);
    acceptor_.open(endpoint.protocol());
    acceptor_.bind(endpoint);  // throws when the port is taken
    acceptor_.listen(asio::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  void start() { do_accept(); }
  void stop() {
    beast::error_code ec;
    acceptor_.close(ec);
    const auto clients = clients_;
    for (auto* c : clients) c->send(nullptr);
  }

  ServeSession& session() { return *session_; }
  const ServerOptions& options() const { return options_; }

  std::shared_ptr<const std::string> latest_text() {
    auto snap = session_->snapshot();
    return std::shared_ptr<const std::string>(snap, &snap->text);
  }

  // Runs one client frame through the session; state changes go to everyone,
  // errors and GetState replies only to the sender.
  void dispatch(WsConnection& from, const std::string& text) {
    auto reply = session_->handle(text);
    if (reply.changed) {
      options_.log("revision " + std::to_string(session_->revision()));
      auto shared = latest_text();
      for (auto* c : clients_) c->send(shared);
    } else {
      from.send(std::make_shared<const std::string>(std::move(reply.text)));
    }
  }

  void join(WsConnection* c) { clients_.insert(c); }
  void leave(WsConnection* c) { clients_.erase(c); }

  std::string static_file(const std::string& target, std::string& type) const {
    if (options_.static_dir.empty()) return {};
    std::string path = target.substr(0, target.find('?'));
    if (path.empty() || path == "/") path = "/index.html";
    if (path.find("..") != std::string::npos) return {};
    const auto file = options_.static_dir / path.substr(1);
    std::ifstream in(file, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    type = mime_type(file);
    return ss.str();
  }

 private:
  void do_accept() {
    acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<HttpConnection>(std::move(socket), *this)->run();
      do_accept();
    });
  }

  asio::io_context& ioc_;
  tcp::acceptor acceptor_;
  std::shared_ptr<ServeSession> session_;
  ServerOptions options_;
  std::set<WsConnection*> clients_;
};

inline void HttpConnection::on_read(beast::error_code ec, std::size_t) {
  if (ec) return;
  if (websocket::is_upgrade(req_)) {
    stream_.expires_never();
    std::make_shared<WsConnection>(stream_.release_socket(), server_)->run(std::move(req_));
    return;
  }
  if (req_.method() != http::verb::get) {
    respond(http::status::method_not_allowed, "GET only\n", "text/plain");
    return;
  }
  const std::string target(req_.target());
  if (target == "/state") {
    respond(http::status::ok, *server_.latest_text(), "application/json");
    return;
  }
  std::string type;
  auto body = server_.static_file(target, type);
  if (!body.empty()) {
    respond(http::status::ok, std::move(body), type);
  } else if (target == "/" || target == "/index.html") {
    respond(http::status::ok,
            "<!doctype html><title>wireforce</title><p>No viewer assets configured. "
            "Connect a WebSocket client to /ws or GET /state.</p>\n",
            "text/html");
  } else {
    respond(http::status::not_found, "not found\n", "text/plain");
  }
}

inline void HttpConnection::respond(http::status status, std::string body, const std::string& type) {
  auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
  res->set(http::field::content_type, type);
  res->set(http::field::cache_control, "no-store");
  res->keep_alive(false);
  res->body() = std::move(body);
  res->prepare_payload();
  http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
    beast::error_code ec;
    self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  });
}

inline void WsConnection::run(http::request<http::string_body> req) {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
}

inline void WsConnection::on_accept(beast::error_code ec) {
  if (ec) return;
  open_ = true;
  server_.join(this);
  send(server_.latest_text());
  arm_heartbeat();
  do_read();
}

inline void WsConnection::do_read() {
  ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
}

inline void WsConnection::on_read(beast::error_code ec, std::size_t) {
  if (ec) {
    close();
    return;
  }
  const std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  auto self = shared_from_this();
  server_.dispatch(*this, text);
  do_read();
}

// A null message requests a close once the queue drains.
inline void WsConnection::send(std::shared_ptr<const std::string> text) {
  if (!open_) return;
  queue_.push_back(std::move(text));
  if (queue_.size() == 1) do_write();
}

inline void WsConnection::do_write() {
  if (queue_.front() == nullptr) {
    ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {});
    queue_.clear();
    close();
    return;
  }
  ws_.text(true);
  ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) {
      self->close();
      return;
    }
    self->last_send_ = std::chrono::steady_clock::now();
    self->queue_.pop_front();
    if (!self->queue_.empty()) self->do_write();
  });
}

// Resends the latest state whenever the channel has been quiet for a full
// heartbeat period.
inline void WsConnection::arm_heartbeat() {
  if (server_.options().heartbeat.count() <= 0) return;
  timer_.expires_after(server_.options().heartbeat);
  timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec || !self->open_) return;
    const auto idle = std::chrono::steady_clock::now() - self->last_send_;
    if (idle >= self->server_.options().heartbeat && self->queue_.empty()) self->send(self->server_.latest_text());
    self->arm_heartbeat();
  });
}

inline void WsConnection::close() {
  if (!open_) return;
  open_ = false;
  timer_.cancel();
  server_.leave(this);
}

}  // namespace wireforce::serve

#endif  // WIREFORCE_SERVE_SERVER_HPP
