/**
 * @file edge.hpp
 * @brief Software stand-in for the NodeMCU subscriber: a topic cache served over HTTP.
 */
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include "aq/mqtt/connection.hpp"
#include "aq/time.hpp"

namespace aq::edge {

struct CacheEntry {
  std::string payload;
  Instant received{};
};

/// Latest payload per topic, at most `capacity` topics, least-recently-updated evicted first.
class EdgeCache {
 public:
  static constexpr std::size_t kDefaultCapacity = 10'000;

  explicit EdgeCache(std::size_t capacity = kDefaultCapacity);

  void apply(const mqtt::TopicMessage& message, Instant received);

  [[nodiscard]] std::optional<CacheEntry> get(const std::string& topic) const;
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }

  /// Parameter key -> payload for every cached aq/<id>/<param>[/forecast] topic of one kind.
  [[nodiscard]] std::map<std::string, std::string> payloads_for(std::int64_t installation_id,
                                                                mqtt::TopicKind kind) const;

 private:
  struct Slot {
    CacheEntry entry;
    std::uint64_t sequence;
  };

  std::size_t capacity_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Slot> entries_;
  std::map<std::uint64_t, std::string> by_update_;
  std::uint64_t next_sequence_ = 0;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// GET /current, /forecast (both ?installation=<id>) and /health. Reads only the cache.
HttpResponse serve_request(const EdgeCache& cache, const std::string& path,
                           const std::map<std::string, std::string>& query);

struct EdgeOptions {
  std::string filter = "aq/#";
  std::string bind_address = "0.0.0.0";
  int port = 8266;
  /// Value of Access-Control-Allow-Origin.
  std::string cors_origin = "*";
};

/**
 * @brief Subscribes through a broker connection and serves the cache over HTTP.
 */
class EdgeNode {
 public:
  EdgeNode(std::shared_ptr<mqtt::BrokerConnection> connection, EdgeOptions options = {}, Clock clock = wall_clock());
  ~EdgeNode();
  EdgeNode(const EdgeNode&) = delete;
  EdgeNode& operator=(const EdgeNode&) = delete;

  /// Subscribes (connecting if needed). Throws MqttError when the broker is unreachable.
  void subscribe();
  /// Starts the HTTP server in the background; returns the bound port (useful with port 0).
  int start_http();
  void stop();

  [[nodiscard]] const EdgeCache& cache() const { return cache_; }

 private:
  struct Server;

  std::shared_ptr<mqtt::BrokerConnection> connection_;
  EdgeOptions options_;
  Clock clock_;
  EdgeCache cache_;
  std::unique_ptr<Server> server_;
};

}  // namespace aq::edge
