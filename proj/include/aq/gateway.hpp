/**
 * @file gateway.hpp
 * @brief Publisher side: topic payloads and a buffered, reconnecting publisher.
 */
#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <mutex>

#include "aq/forecast/forecaster.hpp"
#include "aq/mqtt/connection.hpp"
#include "aq/store.hpp"

namespace aq::gateway {

/// {"ts": RFC3339, "value": number}
std::string measurement_payload(const SeriesPoint& point);
/// {"base": RFC3339, "h1": n, "h2": n, "h3": n, "model_id": s}
std::string forecast_payload(const forecast::ForecastSet& set);

struct GatewayOptions {
  std::size_t buffer_capacity = 1000;
  std::chrono::milliseconds publish_timeout{5000};
};

/**
 * @brief QoS 1 retained publisher with a bounded drop-oldest offline buffer.
 *
 * Calls are serialized on one lock, so per-topic order is the call order.
 * Undeliverable messages are buffered and the error is rethrown; buffered
 * messages go out, oldest first, before any new message once the broker is back.
 */
class Gateway {
 public:
  Gateway(std::shared_ptr<mqtt::BrokerConnection> connection, GatewayOptions options = {});

  void publish(const mqtt::TopicMessage& message);
  void publish_sample(std::int64_t installation_id, Parameter parameter, const SeriesPoint& point);
  void publish_forecast(std::int64_t installation_id, const forecast::ForecastSet& set);

  /// Reconnects if needed and drains the buffer. Returns the number delivered; never throws.
  std::size_t flush();

  [[nodiscard]] std::size_t buffered() const;
  [[nodiscard]] std::size_t dropped() const;
  [[nodiscard]] std::size_t published() const;

 private:
  void drain_locked();
  void enqueue_locked(const mqtt::TopicMessage& message);

  std::shared_ptr<mqtt::BrokerConnection> connection_;
  GatewayOptions options_;
  mutable std::mutex mutex_;
  std::deque<mqtt::TopicMessage> buffer_;
  std::size_t dropped_ = 0;
  std::size_t published_ = 0;
};

}  // namespace aq::gateway
