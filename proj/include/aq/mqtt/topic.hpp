#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "aq/domain.hpp"

namespace aq::mqtt {

class MqttError : public std::runtime_error {
 public:
  enum class Kind { InvalidTopic, InvalidFilter, ProtocolError, NotConnected, PublishTimeout, Refused, TlsError };

  MqttError(Kind kind, std::string message) : std::runtime_error(std::move(message)), kind_(kind) {}
  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct TopicMessage {
  std::string topic;
  std::string payload;
  std::uint8_t qos = 1;
  bool retain = true;

  friend bool operator==(const TopicMessage&, const TopicMessage&) = default;
};

/// Publishable name: non-empty, no wildcards, no leading/trailing '/', no NUL.
bool valid_topic(std::string_view topic);
/// Subscription filter: '+' and '#' only as whole levels, '#' only last.
bool valid_filter(std::string_view filter);

/// Throws MqttError(InvalidTopic) unless valid_topic and qos is 0 or 1.
void check_message(const TopicMessage& message);

/// MQTT matching rules, including that wildcards at the first level skip '$' topics.
bool topic_matches(std::string_view filter, std::string_view topic);

enum class TopicKind { Measurement, Forecast };

/// aq/<id>/<parameter> or aq/<id>/<parameter>/forecast.
std::string topic_for(std::int64_t installation_id, Parameter parameter, TopicKind kind);

struct ParsedTopic {
  std::int64_t installation_id;
  std::string parameter_key;
  TopicKind kind;
};

/// Inverse of topic_for for any aq/<int>/<level>[/forecast] topic.
std::optional<ParsedTopic> parse_topic(std::string_view topic);

}  // namespace aq::mqtt
