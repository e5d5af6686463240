#include <iostream>

#include "aq/service.hpp"
#include "httplib.h"

namespace aq::service {

struct ApiServer::Impl {
  Impl(const Service& s, ApiConfig c, Clock k) : service(s), config(std::move(c)), clock(std::move(k)) {}

  const Service& service;
  ApiConfig config;
  Clock clock;
  httplib::Server http;
  std::thread thread;
};

ApiServer::ApiServer(const Service& service, ApiConfig config, Clock clock)
    : impl_(std::make_unique<Impl>(service, std::move(config), std::move(clock))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start() {
  auto& http = impl_->http;
  auto* impl = impl_.get();
  http.set_default_headers({{"Access-Control-Allow-Origin", impl->config.cors_origin}});
  http.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  http.Get("/api/.*", [impl](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto r = impl->service.handle_api_request(req.path, query, impl->clock());
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });
  if (!impl->config.static_dir.empty() && !http.set_mount_point("/", impl->config.static_dir.string())) {
    throw ConfigError("static_dir " + impl->config.static_dir.string() + " is not a directory");
  }

  int port = impl->config.port;
  if (port == 0) {
    port = http.bind_to_any_port(impl->config.bind_address);
  } else if (!http.bind_to_port(impl->config.bind_address, port)) {
    port = -1;
  }
  if (port < 0) {
    throw std::runtime_error("api cannot bind " + impl->config.bind_address + ":" +
                             std::to_string(impl->config.port));
  }
  impl->thread = std::thread([impl] { impl->http.listen_after_bind(); });
  return port;
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

Scheduler::Scheduler(Service& service, std::chrono::seconds interval, Clock clock)
    : service_(service), interval_(interval), clock_(std::move(clock)) {}

Scheduler::~Scheduler() { stop(); }

void Scheduler::start() { thread_ = std::thread([this] { loop(); }); }

void Scheduler::stop() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Scheduler::wait() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return stop_; });
}

void Scheduler::loop() {
  std::unique_lock lock(mutex_);
  while (!stop_) {
    lock.unlock();
    const auto now = clock_();
    try {
      const auto report = service_.scheduler_tick(now);
      std::cout << to_json(report) << std::endl;
      auto& store = service_.store();
      store.compact(now);
      const auto& dir = service_.config().store.data_dir;
      if (!dir.empty()) store.save_snapshot(dir / "store.snapshot");
    } catch (const std::exception& e) {
      std::cerr << "tick failed: " << e.what() << std::endl;
    }
    lock.lock();
    cv_.wait_for(lock, interval_, [this] { return stop_; });
  }
}

}  // namespace aq::service
