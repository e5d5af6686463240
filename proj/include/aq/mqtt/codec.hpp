/**
 * @file codec.hpp
 * @brief MQTT 3.1.1 control packets used by the gateway, the edge node and the test broker.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace aq::mqtt {

struct Connect {
  std::string client_id;
  std::optional<std::string> username;
  std::optional<std::string> password;
  std::uint16_t keep_alive = 60;
  bool clean_session = true;
  friend bool operator==(const Connect&, const Connect&) = default;
};

struct ConnAck {
  bool session_present = false;
  /// 0 accepted, 1 bad protocol, 2 id rejected, 3 unavailable, 4 bad credentials, 5 not authorized.
  std::uint8_t return_code = 0;
  friend bool operator==(const ConnAck&, const ConnAck&) = default;
};

struct Publish {
  std::string topic;
  std::string payload;
  std::uint8_t qos = 0;
  bool retain = false;
  bool dup = false;
  std::uint16_t packet_id = 0;  // only on the wire when qos > 0
  friend bool operator==(const Publish&, const Publish&) = default;
};

struct PubAck {
  std::uint16_t packet_id = 0;
  friend bool operator==(const PubAck&, const PubAck&) = default;
};

struct Subscribe {
  std::uint16_t packet_id = 0;
  std::vector<std::pair<std::string, std::uint8_t>> filters;
  friend bool operator==(const Subscribe&, const Subscribe&) = default;
};

struct SubAck {
  std::uint16_t packet_id = 0;
  std::vector<std::uint8_t> return_codes;
  friend bool operator==(const SubAck&, const SubAck&) = default;
};

struct Unsubscribe {
  std::uint16_t packet_id = 0;
  std::vector<std::string> filters;
  friend bool operator==(const Unsubscribe&, const Unsubscribe&) = default;
};

struct UnsubAck {
  std::uint16_t packet_id = 0;
  friend bool operator==(const UnsubAck&, const UnsubAck&) = default;
};

struct PingReq {
  friend bool operator==(const PingReq&, const PingReq&) = default;
};
struct PingResp {
  friend bool operator==(const PingResp&, const PingResp&) = default;
};
struct Disconnect {
  friend bool operator==(const Disconnect&, const Disconnect&) = default;
};

using Packet = std::variant<Connect, ConnAck, Publish, PubAck, Subscribe, SubAck, Unsubscribe, UnsubAck, PingReq,
                            PingResp, Disconnect>;

std::string encode(const Packet& packet);

/// Incremental decoder over a byte stream. Throws MqttError(ProtocolError) on malformed input.
class PacketReader {
 public:
  explicit PacketReader(std::size_t max_packet_bytes = 1 << 20) : max_(max_packet_bytes) {}

  void feed(const char* data, std::size_t n) { buffer_.append(data, n); }
  void feed(const std::string& bytes) { buffer_ += bytes; }

  /// Next complete packet, or nullopt when more bytes are needed.
  std::optional<Packet> next();
  [[nodiscard]] bool empty() const noexcept { return buffer_.empty(); }

 private:
  std::string buffer_;
  std::size_t max_;
};

/// Single-packet convenience for tests; throws unless bytes hold exactly one packet.
Packet decode(const std::string& bytes);

}  // namespace aq::mqtt
