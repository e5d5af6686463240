#include "aq/mqtt/codec.hpp"

#include "aq/mqtt/topic.hpp"

namespace aq::mqtt {

namespace {

enum Type : std::uint8_t {
  kConnect = 1,
  kConnAck = 2,
  kPublish = 3,
  kPubAck = 4,
  kSubscribe = 8,
  kSubAck = 9,
  kUnsubscribe = 10,
  kUnsubAck = 11,
  kPingReq = 12,
  kPingResp = 13,
  kDisconnect = 14,
};

[[noreturn]] void protocol_error(const std::string& what) {
  throw MqttError(MqttError::Kind::ProtocolError, "MQTT protocol error: " + what);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v & 0xff));
}

void put_str(std::string& out, const std::string& s) {
  if (s.size() > 0xffff) protocol_error("string longer than 65535 bytes");
  put_u16(out, static_cast<std::uint16_t>(s.size()));
  out += s;
}

std::string frame(std::uint8_t first, const std::string& body) {
  std::string out(1, static_cast<char>(first));
  std::size_t len = body.size();
  if (len > 268435455) protocol_error("packet too large");
  do {
    std::uint8_t b = len % 128;
    len /= 128;
    if (len > 0) b |= 0x80;
    out.push_back(static_cast<char>(b));
  } while (len > 0);
  return out + body;
}

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(s_[pos_++]);
  }
  std::uint16_t u16() {
    need(2);
    const auto hi = static_cast<std::uint8_t>(s_[pos_]);
    const auto lo = static_cast<std::uint8_t>(s_[pos_ + 1]);
    pos_ += 2;
    return static_cast<std::uint16_t>(hi << 8 | lo);
  }
  std::string str() {
    const auto n = u16();
    need(n);
    std::string out(s_.substr(pos_, n));
    pos_ += n;
    return out;
  }
  std::string rest() {
    std::string out(s_.substr(pos_));
    pos_ = s_.size();
    return out;
  }
  [[nodiscard]] bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) protocol_error("truncated packet");
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

struct Encoder {
  std::string operator()(const Connect& p) const {
    std::string b;
    put_str(b, "MQTT");
    b.push_back(4);
    std::uint8_t flags = 0;
    if (p.clean_session) flags |= 0x02;
    if (p.username) flags |= 0x80;
    if (p.password) flags |= 0x40;
    b.push_back(static_cast<char>(flags));
    put_u16(b, p.keep_alive);
    put_str(b, p.client_id);
    if (p.username) put_str(b, *p.username);
    if (p.password) put_str(b, *p.password);
    return frame(kConnect << 4, b);
  }
  std::string operator()(const ConnAck& p) const {
    std::string b;
    b.push_back(p.session_present ? 1 : 0);
    b.push_back(static_cast<char>(p.return_code));
    return frame(kConnAck << 4, b);
  }
  std::string operator()(const Publish& p) const {
    if (p.qos > 1) protocol_error("QoS 2 not supported");
    std::string b;
    put_str(b, p.topic);
    if (p.qos > 0) put_u16(b, p.packet_id);
    b += p.payload;
    const std::uint8_t flags = static_cast<std::uint8_t>((p.dup ? 0x08 : 0) | (p.qos << 1) | (p.retain ? 1 : 0));
    return frame(static_cast<std::uint8_t>(kPublish << 4 | flags), b);
  }
  std::string operator()(const PubAck& p) const {
    std::string b;
    put_u16(b, p.packet_id);
    return frame(kPubAck << 4, b);
  }
  std::string operator()(const Subscribe& p) const {
    std::string b;
    put_u16(b, p.packet_id);
    for (const auto& [f, q] : p.filters) {
      put_str(b, f);
      b.push_back(static_cast<char>(q));
    }
    return frame(kSubscribe << 4 | 0x02, b);
  }
  std::string operator()(const SubAck& p) const {
    std::string b;
    put_u16(b, p.packet_id);
    for (auto c : p.return_codes) b.push_back(static_cast<char>(c));
    return frame(kSubAck << 4, b);
  }
  std::string operator()(const Unsubscribe& p) const {
    std::string b;
    put_u16(b, p.packet_id);
    for (const auto& f : p.filters) put_str(b, f);
    return frame(kUnsubscribe << 4 | 0x02, b);
  }
  std::string operator()(const UnsubAck& p) const {
    std::string b;
    put_u16(b, p.packet_id);
    return frame(kUnsubAck << 4, b);
  }
  std::string operator()(const PingReq&) const { return frame(kPingReq << 4, ""); }
  std::string operator()(const PingResp&) const { return frame(kPingResp << 4, ""); }
  std::string operator()(const Disconnect&) const { return frame(kDisconnect << 4, ""); }
};

Packet parse(std::uint8_t first, std::string_view body) {
  const std::uint8_t type = first >> 4;
  const std::uint8_t flags = first & 0x0f;
  Cursor c(body);
  auto expect_flags = [&](std::uint8_t want) {
    if (flags != want) protocol_error("bad fixed-header flags for packet type " + std::to_string(type));
  };
  auto finish = [&](Packet p) {
    if (!c.done()) protocol_error("trailing bytes in packet type " + std::to_string(type));
    return p;
  };
  switch (type) {
    case kConnect: {
      expect_flags(0);
      if (c.str() != "MQTT") protocol_error("unsupported protocol name");
      if (c.u8() != 4) protocol_error("unsupported protocol level");
      const std::uint8_t f = c.u8();
      if (f & 0x01) protocol_error("reserved connect flag set");
      Connect p;
      p.clean_session = f & 0x02;
      p.keep_alive = c.u16();
      p.client_id = c.str();
      if (f & 0x04) {  // will: parsed and ignored
        c.str();
        c.str();
      }
      if (f & 0x80) p.username = c.str();
      if (f & 0x40) p.password = c.str();
      return finish(p);
    }
    case kConnAck: {
      expect_flags(0);
      ConnAck p;
      p.session_present = c.u8() & 1;
      p.return_code = c.u8();
      return finish(p);
    }
    case kPublish: {
      Publish p;
      p.dup = flags & 0x08;
      p.qos = (flags >> 1) & 0x03;
      p.retain = flags & 0x01;
      if (p.qos > 1) protocol_error("QoS 2 not supported");
      p.topic = c.str();
      if (p.qos > 0) p.packet_id = c.u16();
      p.payload = c.rest();
      return p;
    }
    case kPubAck: {
      expect_flags(0);
      return finish(PubAck{c.u16()});
    }
    case kSubscribe: {
      expect_flags(2);
      Subscribe p;
      p.packet_id = c.u16();
      while (!c.done()) {
        auto f = c.str();
        p.filters.emplace_back(std::move(f), c.u8());
      }
      if (p.filters.empty()) protocol_error("SUBSCRIBE without filters");
      return p;
    }
    case kSubAck: {
      expect_flags(0);
      SubAck p;
      p.packet_id = c.u16();
      while (!c.done()) p.return_codes.push_back(c.u8());
      return p;
    }
    case kUnsubscribe: {
      expect_flags(2);
      Unsubscribe p;
      p.packet_id = c.u16();
      while (!c.done()) p.filters.push_back(c.str());
      return p;
    }
    case kUnsubAck: {
      expect_flags(0);
      return finish(UnsubAck{c.u16()});
    }
    case kPingReq:
      expect_flags(0);
      return finish(PingReq{});
    case kPingResp:
      expect_flags(0);
      return finish(PingResp{});
    case kDisconnect:
      expect_flags(0);
      return finish(Disconnect{});
    default:
      protocol_error("unsupported packet type " + std::to_string(type));
  }
}

}  // namespace

std::string encode(const Packet& packet) { return std::visit(Encoder{}, packet); }

std::optional<Packet> PacketReader::next() {
  if (buffer_.size() < 2) return std::nullopt;
  std::size_t length = 0;
  std::size_t multiplier = 1;
  std::size_t i = 1;
  while (true) {
    if (i >= buffer_.size()) return std::nullopt;
    if (i > 4) protocol_error("remaining length longer than 4 bytes");
    const auto b = static_cast<std::uint8_t>(buffer_[i]);
    length += (b & 0x7f) * multiplier;
    multiplier *= 128;
    ++i;
    if (!(b & 0x80)) break;
  }
  if (length > max_) protocol_error("packet of " + std::to_string(length) + " bytes exceeds limit");
  if (buffer_.size() < i + length) return std::nullopt;
  const auto first = static_cast<std::uint8_t>(buffer_[0]);
  Packet p = parse(first, std::string_view(buffer_).substr(i, length));
  buffer_.erase(0, i + length);
  return p;
}

Packet decode(const std::string& bytes) {
  PacketReader r;
  r.feed(bytes);
  auto p = r.next();
  if (!p) protocol_error("incomplete packet");
  if (!r.empty()) protocol_error("trailing bytes after packet");
  return *p;
}

}  // namespace aq::mqtt
