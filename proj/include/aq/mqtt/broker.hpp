/**
 * @file broker.hpp
 * @brief Small MQTT broker: an in-process core plus an optional TCP front speaking 3.1.1.
 *
 * Supports what the pipeline needs (QoS 0/1, retained messages, '+'/'#'
 * filters). No persistent sessions, no wills, no QoS 2.
 */
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "aq/mqtt/topic.hpp"

namespace aq::mqtt {

/// Delivery callback. `retain` is set only for retained messages replayed on subscribe.
using MessageHandler = std::function<void(const TopicMessage&)>;

class InProcessBroker {
 public:
  /// Registers the handler and synchronously replays matching retained messages.
  std::uint64_t subscribe(const std::string& filter, MessageHandler handler);
  void unsubscribe(std::uint64_t subscription);

  /// Stores retained payloads (an empty retained payload clears the topic) and delivers
  /// synchronously to every matching subscriber. Throws NotConnected while unavailable.
  void publish(const TopicMessage& message);

  /// Simulated outage switch.
  void set_available(bool available);
  [[nodiscard]] bool available() const;

  [[nodiscard]] std::optional<std::string> retained(const std::string& topic) const;
  [[nodiscard]] std::size_t retained_count() const;
  [[nodiscard]] std::uint64_t delivered_count() const { return delivered_; }

 private:
  struct Subscription {
    std::string filter;
    std::shared_ptr<MessageHandler> handler;
  };

  mutable std::mutex mutex_;
  std::map<std::uint64_t, Subscription> subscriptions_;
  std::map<std::string, std::string> retained_;
  std::uint64_t next_id_ = 1;
  bool available_ = true;
  std::atomic<std::uint64_t> delivered_{0};
};

/**
 * @brief TCP listener bridging MQTT 3.1.1 clients onto an InProcessBroker.
 */
class BrokerTcpServer {
 public:
  explicit BrokerTcpServer(std::shared_ptr<InProcessBroker> broker);
  ~BrokerTcpServer();
  BrokerTcpServer(const BrokerTcpServer&) = delete;
  BrokerTcpServer& operator=(const BrokerTcpServer&) = delete;

  /// Port 0 picks an ephemeral port; returns the bound port.
  int start(const std::string& bind_address = "127.0.0.1", int port = 0);
  /// Closes the listener and every client connection.
  void stop();

  [[nodiscard]] int port() const { return port_; }
  [[nodiscard]] std::size_t client_count() const;

 private:
  class Session;

  void accept_loop();
  void reap();

  std::shared_ptr<InProcessBroker> broker_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Session>> sessions_;
};

}  // namespace aq::mqtt
