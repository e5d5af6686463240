/**
 * @file connection.hpp
 * @brief Client connections to a broker: in-process for tests, MQTT 3.1.1 over TCP or TLS otherwise.
 */
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "aq/mqtt/broker.hpp"
#include "aq/mqtt/codec.hpp"

namespace aq::mqtt {

class BrokerConnection {
 public:
  virtual ~BrokerConnection() = default;

  /// Throws MqttError(NotConnected) or MqttError(Refused).
  virtual void connect() = 0;
  [[nodiscard]] virtual bool connected() const = 0;
  /// QoS 1 blocks until acknowledged. Throws NotConnected or PublishTimeout.
  virtual void publish(const TopicMessage& message, std::chrono::milliseconds timeout) = 0;
  /// Subscriptions survive reconnects.
  virtual void subscribe(const std::string& filter, MessageHandler handler) = 0;
  virtual void disconnect() = 0;
};

class InProcessConnection final : public BrokerConnection {
 public:
  explicit InProcessConnection(std::shared_ptr<InProcessBroker> broker);
  ~InProcessConnection() override;

  void connect() override;
  [[nodiscard]] bool connected() const override;
  void publish(const TopicMessage& message, std::chrono::milliseconds timeout) override;
  void subscribe(const std::string& filter, MessageHandler handler) override;
  void disconnect() override;

 private:
  std::shared_ptr<InProcessBroker> broker_;
  mutable std::mutex mutex_;
  bool connected_ = false;
  std::vector<std::pair<std::string, MessageHandler>> wanted_;
  std::vector<std::uint64_t> active_;
};

struct MqttOptions {
  std::string host = "127.0.0.1";
  int port = 1883;
  std::string client_id = "aq-gateway";
  std::string username;
  std::string password;
  bool tls = false;
  /// Verify the server certificate against ca_file (or the system store when empty).
  bool tls_verify = true;
  std::string ca_file;
  std::uint16_t keep_alive_s = 30;
  std::chrono::milliseconds connect_timeout{5000};
};

class Stream;

class MqttTcpConnection final : public BrokerConnection {
 public:
  explicit MqttTcpConnection(MqttOptions options);
  ~MqttTcpConnection() override;

  void connect() override;
  [[nodiscard]] bool connected() const override;
  void publish(const TopicMessage& message, std::chrono::milliseconds timeout) override;
  void subscribe(const std::string& filter, MessageHandler handler) override;
  void disconnect() override;

 private:
  void reader_loop(std::shared_ptr<Stream> stream);
  void handle(const Packet& packet);
  void send(const Packet& packet);
  void fail_pending(const std::string& why);
  std::uint16_t next_packet_id();
  void send_subscribe(const std::string& filter, std::chrono::milliseconds timeout);
  void teardown();

  MqttOptions options_;
  std::mutex connect_mutex_;  // serializes connect/disconnect
  std::mutex write_mutex_;
  mutable std::mutex state_mutex_;
  std::shared_ptr<Stream> stream_;
  std::thread reader_;
  std::atomic<bool> connected_{false};
  std::atomic<bool> stopping_{false};
  std::uint16_t packet_id_ = 0;
  std::map<std::uint16_t, std::promise<void>> pending_;
  std::optional<std::promise<ConnAck>> connack_;
  std::vector<std::pair<std::string, MessageHandler>> subscriptions_;
  std::atomic<std::int64_t> last_send_ms_{0};
};

}  // namespace aq::mqtt
