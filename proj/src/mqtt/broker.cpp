#include "aq/mqtt/broker.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "aq/mqtt/codec.hpp"
#include "stream.hpp"

namespace aq::mqtt {

std::uint64_t InProcessBroker::subscribe(const std::string& filter, MessageHandler handler) {
  if (!valid_filter(filter)) throw MqttError(MqttError::Kind::InvalidFilter, "invalid filter: " + filter);
  auto shared = std::make_shared<MessageHandler>(std::move(handler));
  std::vector<TopicMessage> replay;
  std::uint64_t id;
  {
    std::lock_guard lock(mutex_);
    id = next_id_++;
    subscriptions_.emplace(id, Subscription{filter, shared});
    for (const auto& [topic, payload] : retained_) {
      if (topic_matches(filter, topic)) replay.push_back({topic, payload, 1, true});
    }
  }
  for (const auto& m : replay) {
    (*shared)(m);
    ++delivered_;
  }
  return id;
}

void InProcessBroker::unsubscribe(std::uint64_t subscription) {
  std::lock_guard lock(mutex_);
  subscriptions_.erase(subscription);
}

void InProcessBroker::publish(const TopicMessage& message) {
  check_message(message);
  std::vector<std::shared_ptr<MessageHandler>> targets;
  {
    std::lock_guard lock(mutex_);
    if (!available_) throw MqttError(MqttError::Kind::NotConnected, "broker unavailable");
    if (message.retain) {
      if (message.payload.empty()) {
        retained_.erase(message.topic);
      } else {
        retained_[message.topic] = message.payload;
      }
    }
    for (const auto& [id, sub] : subscriptions_) {
      if (topic_matches(sub.filter, message.topic)) targets.push_back(sub.handler);
    }
  }
  TopicMessage live = message;
  live.retain = false;
  for (const auto& h : targets) {
    (*h)(live);
    ++delivered_;
  }
}

void InProcessBroker::set_available(bool available) {
  std::lock_guard lock(mutex_);
  available_ = available;
}

bool InProcessBroker::available() const {
  std::lock_guard lock(mutex_);
  return available_;
}

std::optional<std::string> InProcessBroker::retained(const std::string& topic) const {
  std::lock_guard lock(mutex_);
  const auto it = retained_.find(topic);
  if (it == retained_.end()) return std::nullopt;
  return it->second;
}

std::size_t InProcessBroker::retained_count() const {
  std::lock_guard lock(mutex_);
  return retained_.size();
}

// ---------------------------------------------------------------------------

class BrokerTcpServer::Session : public std::enable_shared_from_this<Session> {
 public:
  Session(std::shared_ptr<InProcessBroker> broker, int fd) : broker_(std::move(broker)), stream_(plain_stream(fd)) {}

  void start() {
    thread_ = std::thread([self = shared_from_this()] { self->run(); });
  }
  void close() { stream_->shutdown(); }
  void join() {
    if (thread_.joinable()) thread_.join();
  }
  [[nodiscard]] bool finished() const { return finished_; }

 private:
  void send(const Packet& p) {
    std::lock_guard lock(write_mutex_);
    stream_->write_all(encode(p));
  }

  void forward(const TopicMessage& m, std::uint8_t granted) {
    Publish p{m.topic, m.payload, std::min(granted, m.qos), m.retain, false, 0};
    try {
      std::lock_guard lock(write_mutex_);
      if (p.qos > 0) {
        if (++next_id_ == 0) next_id_ = 1;
        p.packet_id = next_id_;
      }
      stream_->write_all(encode(p));
    } catch (const MqttError&) {
      stream_->shutdown();
    }
  }

  void run() {
    try {
      serve();
    } catch (const MqttError&) {
    }
    for (const auto& [filter, ids] : subscriptions_) {
      for (auto id : ids) broker_->unsubscribe(id);
    }
    subscriptions_.clear();
    stream_->shutdown();
    finished_ = true;
  }

  void serve() {
    PacketReader reader;
    char buffer[4096];
    bool connected = false;
    while (true) {
      const std::size_t n = stream_->read_some(buffer, sizeof buffer);
      if (n == 0) return;
      reader.feed(buffer, n);
      while (auto packet = reader.next()) {
        if (!connected) {
          if (!std::holds_alternative<Connect>(*packet)) return;
          const bool up = broker_->available();
          send(ConnAck{false, static_cast<std::uint8_t>(up ? 0 : 3)});
          if (!up) return;
          connected = true;
          continue;
        }
        if (!dispatch(*packet)) return;
      }
    }
  }

  bool dispatch(const Packet& packet) {
    if (const auto* p = std::get_if<Publish>(&packet)) {
      TopicMessage m{p->topic, p->payload, p->qos, p->retain};
      if (!valid_topic(m.topic)) return false;
      broker_->publish(m);  // NotConnected drops the session
      if (p->qos > 0) send(PubAck{p->packet_id});
      return true;
    }
    if (const auto* s = std::get_if<Subscribe>(&packet)) {
      SubAck ack{s->packet_id, {}};
      std::vector<std::pair<std::string, std::uint8_t>> accepted;
      for (const auto& [filter, qos] : s->filters) {
        if (valid_filter(filter)) {
          const std::uint8_t granted = std::min<std::uint8_t>(qos, 1);
          ack.return_codes.push_back(granted);
          accepted.emplace_back(filter, granted);
        } else {
          ack.return_codes.push_back(0x80);
        }
      }
      send(ack);
      for (const auto& [filter, granted] : accepted) {
        std::weak_ptr<Session> weak = shared_from_this();
        const auto id = broker_->subscribe(filter, [weak, granted = granted](const TopicMessage& m) {
          if (auto self = weak.lock()) self->forward(m, granted);
        });
        subscriptions_[filter].push_back(id);
      }
      return true;
    }
    if (const auto* u = std::get_if<Unsubscribe>(&packet)) {
      for (const auto& f : u->filters) {
        for (auto id : subscriptions_[f]) broker_->unsubscribe(id);
        subscriptions_.erase(f);
      }
      send(UnsubAck{u->packet_id});
      return true;
    }
    if (std::holds_alternative<PingReq>(packet)) {
      send(PingResp{});
      return true;
    }
    if (std::holds_alternative<PubAck>(packet)) return true;
    return false;  // DISCONNECT, or a packet a client must not send
  }

  std::shared_ptr<InProcessBroker> broker_;
  std::shared_ptr<Stream> stream_;
  std::thread thread_;
  std::mutex write_mutex_;
  std::uint16_t next_id_ = 0;
  std::map<std::string, std::vector<std::uint64_t>> subscriptions_;
  std::atomic<bool> finished_{false};
};

BrokerTcpServer::BrokerTcpServer(std::shared_ptr<InProcessBroker> broker) : broker_(std::move(broker)) {}

BrokerTcpServer::~BrokerTcpServer() { stop(); }

int BrokerTcpServer::start(const std::string& bind_address, int port) {
  if (running_) return port_;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw MqttError(MqttError::Kind::NotConnected, std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw MqttError(MqttError::Kind::NotConnected, "bad bind address " + bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw MqttError(MqttError::Kind::NotConnected, "listen on " + bind_address + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  return port_;
}

void BrokerTcpServer::accept_loop() {
  while (running_) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    auto session = std::make_shared<Session>(broker_, fd);
    std::lock_guard lock(mutex_);
    if (!running_) {
      session->close();
      continue;
    }
    session->start();
    sessions_.push_back(session);
    reap();
  }
}

void BrokerTcpServer::reap() {
  std::erase_if(sessions_, [](const std::shared_ptr<Session>& s) {
    if (!s->finished()) return false;
    s->join();
    return true;
  });
}

void BrokerTcpServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions.swap(sessions_);
  }
  for (auto& s : sessions) s->close();
  for (auto& s : sessions) s->join();
}

std::size_t BrokerTcpServer::client_count() const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(
      std::count_if(sessions_.begin(), sessions_.end(), [](const auto& s) { return !s->finished(); }));
}

}  // namespace aq::mqtt
