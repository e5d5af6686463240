#include "aq/edge.hpp"
#include "httplib.h"

namespace aq::edge {

struct EdgeNode::Server {
  httplib::Server http;
  std::thread thread;
};

EdgeNode::EdgeNode(std::shared_ptr<mqtt::BrokerConnection> connection, EdgeOptions options, Clock clock)
    : connection_(std::move(connection)), options_(std::move(options)), clock_(std::move(clock)) {
  if (!clock_) clock_ = wall_clock();
}

EdgeNode::~EdgeNode() { stop(); }

void EdgeNode::subscribe() {
  connection_->subscribe(options_.filter, [this](const mqtt::TopicMessage& m) { cache_.apply(m, clock_()); });
  if (!connection_->connected()) connection_->connect();
}

int EdgeNode::start_http() {
  if (server_) return options_.port;
  auto server = std::make_unique<Server>();
  const std::string origin = options_.cors_origin;
  server->http.set_default_headers({{"Access-Control-Allow-Origin", origin}});
  server->http.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server->http.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto r = serve_request(cache_, req.path, query);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });

  int port = options_.port;
  if (port == 0) {
    port = server->http.bind_to_any_port(options_.bind_address);
  } else if (!server->http.bind_to_port(options_.bind_address, port)) {
    port = -1;
  }
  if (port < 0) {
    throw std::runtime_error("edge node cannot bind " + options_.bind_address + ":" + std::to_string(options_.port));
  }
  options_.port = port;
  auto* http = &server->http;
  server->thread = std::thread([http] { http->listen_after_bind(); });
  server_ = std::move(server);
  return port;
}

void EdgeNode::stop() {
  if (server_) {
    server_->http.stop();
    if (server_->thread.joinable()) server_->thread.join();
    server_.reset();
  }
  connection_->disconnect();
}

}  // namespace aq::edge
