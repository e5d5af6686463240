#include "aq/mqtt/connection.hpp"

#include <algorithm>

#include "stream.hpp"

namespace aq::mqtt {

namespace {

[[noreturn]] void not_connected(const std::string& what) { throw MqttError(MqttError::Kind::NotConnected, what); }

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// In-process

InProcessConnection::InProcessConnection(std::shared_ptr<InProcessBroker> broker) : broker_(std::move(broker)) {}

InProcessConnection::~InProcessConnection() { disconnect(); }

void InProcessConnection::connect() {
  std::lock_guard lock(mutex_);
  if (connected_ && broker_->available()) return;
  if (!broker_->available()) not_connected("broker unavailable");
  for (auto id : active_) broker_->unsubscribe(id);
  active_.clear();
  for (const auto& [filter, handler] : wanted_) active_.push_back(broker_->subscribe(filter, handler));
  connected_ = true;
}

bool InProcessConnection::connected() const {
  std::lock_guard lock(mutex_);
  return connected_ && broker_->available();
}

void InProcessConnection::publish(const TopicMessage& message, std::chrono::milliseconds) {
  check_message(message);
  {
    std::lock_guard lock(mutex_);
    if (!connected_) not_connected("not connected");
  }
  try {
    broker_->publish(message);
  } catch (const MqttError& e) {
    if (e.kind() == MqttError::Kind::NotConnected) {
      std::lock_guard lock(mutex_);
      connected_ = false;
    }
    throw;
  }
}

void InProcessConnection::subscribe(const std::string& filter, MessageHandler handler) {
  if (!valid_filter(filter)) throw MqttError(MqttError::Kind::InvalidFilter, "invalid filter: " + filter);
  std::unique_lock lock(mutex_);
  wanted_.emplace_back(filter, handler);
  if (connected_) {
    lock.unlock();
    const auto id = broker_->subscribe(filter, std::move(handler));
    lock.lock();
    active_.push_back(id);
  }
}

void InProcessConnection::disconnect() {
  std::lock_guard lock(mutex_);
  for (auto id : active_) broker_->unsubscribe(id);
  active_.clear();
  connected_ = false;
}

// ---------------------------------------------------------------------------
// TCP / TLS

MqttTcpConnection::MqttTcpConnection(MqttOptions options) : options_(std::move(options)) {}

MqttTcpConnection::~MqttTcpConnection() { disconnect(); }

bool MqttTcpConnection::connected() const { return connected_; }

std::uint16_t MqttTcpConnection::next_packet_id() {
  std::lock_guard lock(state_mutex_);
  do {
    ++packet_id_;
  } while (packet_id_ == 0 || pending_.count(packet_id_));
  return packet_id_;
}

void MqttTcpConnection::send(const Packet& packet) {
  std::shared_ptr<Stream> stream;
  {
    std::lock_guard lock(state_mutex_);
    stream = stream_;
  }
  if (!stream) not_connected("not connected");
  try {
    std::lock_guard lock(write_mutex_);
    stream->write_all(encode(packet));
    last_send_ms_ = now_ms();
  } catch (const MqttError&) {
    connected_ = false;
    stream->shutdown();
    throw;
  }
}

void MqttTcpConnection::fail_pending(const std::string& why) {
  std::lock_guard lock(state_mutex_);
  for (auto& [id, p] : pending_) p.set_exception(std::make_exception_ptr(MqttError(MqttError::Kind::NotConnected, why)));
  pending_.clear();
  if (connack_) {
    connack_->set_exception(std::make_exception_ptr(MqttError(MqttError::Kind::NotConnected, why)));
    connack_.reset();
  }
}

void MqttTcpConnection::teardown() {
  stopping_ = true;
  std::shared_ptr<Stream> stream;
  {
    std::lock_guard lock(state_mutex_);
    stream = stream_;
  }
  if (stream) stream->shutdown();
  if (reader_.joinable()) reader_.join();
  {
    std::lock_guard lock(state_mutex_);
    stream_.reset();
  }
  connected_ = false;
  fail_pending("connection closed");
}

void MqttTcpConnection::connect() {
  std::lock_guard guard(connect_mutex_);
  if (connected_) return;
  teardown();

  int fd = tcp_connect_fd(options_.host, options_.port, options_.connect_timeout);
  std::shared_ptr<Stream> stream =
      options_.tls ? tls_client_stream(fd, TlsOptions{options_.tls_verify, options_.ca_file, options_.host})
                   : plain_stream(fd);

  std::future<ConnAck> ack;
  {
    std::lock_guard lock(state_mutex_);
    stream_ = stream;
    connack_.emplace();
    ack = connack_->get_future();
  }
  stopping_ = false;
  reader_ = std::thread([this, stream] { reader_loop(stream); });

  Connect c;
  c.client_id = options_.client_id;
  c.keep_alive = options_.keep_alive_s;
  if (!options_.username.empty()) c.username = options_.username;
  if (!options_.password.empty()) c.password = options_.password;
  try {
    send(c);
    if (ack.wait_for(options_.connect_timeout) != std::future_status::ready) not_connected("no CONNACK from broker");
    const ConnAck a = ack.get();
    if (a.return_code != 0) {
      throw MqttError(MqttError::Kind::Refused, "broker refused connection, code " + std::to_string(a.return_code));
    }
    connected_ = true;
    std::vector<std::string> filters;
    {
      std::lock_guard lock(state_mutex_);
      for (const auto& [f, h] : subscriptions_) filters.push_back(f);
    }
    for (const auto& f : filters) send_subscribe(f, options_.connect_timeout);
  } catch (...) {
    teardown();
    throw;
  }
}

void MqttTcpConnection::disconnect() {
  std::lock_guard guard(connect_mutex_);
  if (connected_) {
    try {
      send(Disconnect{});
    } catch (const MqttError&) {
    }
  }
  teardown();
}

void MqttTcpConnection::publish(const TopicMessage& message, std::chrono::milliseconds timeout) {
  check_message(message);
  if (!connected_) not_connected("not connected");
  Publish p{message.topic, message.payload, message.qos, message.retain, false, 0};
  if (p.qos == 0) {
    send(p);
    return;
  }
  p.packet_id = next_packet_id();
  std::future<void> acked;
  {
    std::lock_guard lock(state_mutex_);
    acked = pending_[p.packet_id].get_future();
  }
  try {
    send(p);
  } catch (...) {
    std::lock_guard lock(state_mutex_);
    pending_.erase(p.packet_id);
    throw;
  }
  if (acked.wait_for(timeout) != std::future_status::ready) {
    std::lock_guard lock(state_mutex_);
    pending_.erase(p.packet_id);
    throw MqttError(MqttError::Kind::PublishTimeout, "no PUBACK for " + message.topic);
  }
  acked.get();
}

void MqttTcpConnection::send_subscribe(const std::string& filter, std::chrono::milliseconds timeout) {
  const auto id = next_packet_id();
  std::future<void> acked;
  {
    std::lock_guard lock(state_mutex_);
    acked = pending_[id].get_future();
  }
  send(Subscribe{id, {{filter, 1}}});
  if (acked.wait_for(timeout) != std::future_status::ready) {
    std::lock_guard lock(state_mutex_);
    pending_.erase(id);
    not_connected("no SUBACK for " + filter);
  }
  acked.get();
}

void MqttTcpConnection::subscribe(const std::string& filter, MessageHandler handler) {
  if (!valid_filter(filter)) throw MqttError(MqttError::Kind::InvalidFilter, "invalid filter: " + filter);
  {
    std::lock_guard lock(state_mutex_);
    subscriptions_.emplace_back(filter, std::move(handler));
  }
  if (connected_) send_subscribe(filter, options_.connect_timeout);
}

void MqttTcpConnection::handle(const Packet& packet) {
  if (const auto* p = std::get_if<Publish>(&packet)) {
    std::vector<MessageHandler> targets;
    {
      std::lock_guard lock(state_mutex_);
      for (const auto& [f, h] : subscriptions_) {
        if (topic_matches(f, p->topic)) targets.push_back(h);
      }
    }
    const TopicMessage m{p->topic, p->payload, p->qos, p->retain};
    for (const auto& h : targets) h(m);
    if (p->qos > 0) send(PubAck{p->packet_id});
    return;
  }
  std::lock_guard lock(state_mutex_);
  if (const auto* a = std::get_if<ConnAck>(&packet)) {
    if (connack_) {
      connack_->set_value(*a);
      connack_.reset();
    }
  } else if (const auto* a = std::get_if<PubAck>(&packet)) {
    if (auto it = pending_.find(a->packet_id); it != pending_.end()) {
      it->second.set_value();
      pending_.erase(it);
    }
  } else if (const auto* s = std::get_if<SubAck>(&packet)) {
    if (auto it = pending_.find(s->packet_id); it != pending_.end()) {
      const bool refused = std::any_of(s->return_codes.begin(), s->return_codes.end(), [](auto c) { return c & 0x80; });
      if (refused) {
        it->second.set_exception(std::make_exception_ptr(MqttError(MqttError::Kind::Refused, "subscription refused")));
      } else {
        it->second.set_value();
      }
      pending_.erase(it);
    }
  }
}

void MqttTcpConnection::reader_loop(std::shared_ptr<Stream> stream) {
  PacketReader reader;
  char buffer[4096];
  const std::int64_t ping_every_ms = std::max<std::int64_t>(1000, options_.keep_alive_s * 1000 / 2);
  std::string why = "connection closed by broker";
  try {
    while (!stopping_) {
      if (!stream->wait_readable(std::chrono::milliseconds{200})) {
        if (connected_ && now_ms() - last_send_ms_ >= ping_every_ms) send(PingReq{});
        continue;
      }
      const std::size_t n = stream->read_some(buffer, sizeof buffer);
      if (n == 0) break;
      reader.feed(buffer, n);
      while (auto packet = reader.next()) handle(*packet);
    }
  } catch (const std::exception& e) {
    why = e.what();
  }
  connected_ = false;
  fail_pending(why);
}

}  // namespace aq::mqtt
