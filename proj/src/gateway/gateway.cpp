#include "aq/gateway.hpp"

#include "aq/time.hpp"
#include "json.hpp"

namespace aq::gateway {

using nlohmann::ordered_json;

std::string measurement_payload(const SeriesPoint& point) {
  ordered_json j;
  j["ts"] = format_rfc3339(point.timestamp);
  j["value"] = point.value;
  return j.dump();
}

std::string forecast_payload(const forecast::ForecastSet& set) {
  ordered_json j;
  j["base"] = format_rfc3339(set.base_time);
  j["h1"] = set.values[0];
  j["h2"] = set.values[1];
  j["h3"] = set.values[2];
  j["model_id"] = set.model_id;
  return j.dump();
}

Gateway::Gateway(std::shared_ptr<mqtt::BrokerConnection> connection, GatewayOptions options)
    : connection_(std::move(connection)), options_(options) {
  if (options_.buffer_capacity == 0) options_.buffer_capacity = 1;
}

void Gateway::enqueue_locked(const mqtt::TopicMessage& message) {
  if (buffer_.size() >= options_.buffer_capacity) {
    buffer_.pop_front();
    ++dropped_;
  }
  buffer_.push_back(message);
}

void Gateway::drain_locked() {
  while (!buffer_.empty()) {
    connection_->publish(buffer_.front(), options_.publish_timeout);
    buffer_.pop_front();
    ++published_;
  }
}

void Gateway::publish(const mqtt::TopicMessage& message) {
  mqtt::check_message(message);
  std::lock_guard lock(mutex_);
  enqueue_locked(message);
  if (!connection_->connected()) {
    try {
      connection_->connect();
    } catch (const mqtt::MqttError& e) {
      throw mqtt::MqttError(mqtt::MqttError::Kind::NotConnected, e.what());
    }
  }
  drain_locked();
}

void Gateway::publish_sample(std::int64_t installation_id, Parameter parameter, const SeriesPoint& point) {
  publish({mqtt::topic_for(installation_id, parameter, mqtt::TopicKind::Measurement), measurement_payload(point), 1,
           true});
}

void Gateway::publish_forecast(std::int64_t installation_id, const forecast::ForecastSet& set) {
  publish({mqtt::topic_for(installation_id, set.parameter, mqtt::TopicKind::Forecast), forecast_payload(set), 1,
           true});
}

std::size_t Gateway::flush() {
  std::lock_guard lock(mutex_);
  const std::size_t before = published_;
  try {
    if (!connection_->connected()) connection_->connect();
    drain_locked();
  } catch (const mqtt::MqttError&) {
  }
  return published_ - before;
}

std::size_t Gateway::buffered() const {
  std::lock_guard lock(mutex_);
  return buffer_.size();
}

std::size_t Gateway::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

std::size_t Gateway::published() const {
  std::lock_guard lock(mutex_);
  return published_;
}

}  // namespace aq::gateway
