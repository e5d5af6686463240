#include "stream.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/err.h>
#include <openssl/ssl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>

#include "aq/mqtt/topic.hpp"

namespace aq::mqtt {

namespace {

[[noreturn]] void not_connected(const std::string& what) { throw MqttError(MqttError::Kind::NotConnected, what); }

bool poll_fd(int fd, short events, std::chrono::milliseconds timeout) {
  pollfd p{fd, events, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) not_connected(std::string("poll: ") + std::strerror(errno));
  return rc > 0;
}

class PlainStream final : public Stream {
 public:
  explicit PlainStream(int fd) : fd_(fd) {}
  ~PlainStream() override { ::close(fd_); }

  std::size_t read_some(char* buffer, std::size_t n) override {
    ssize_t r;
    do {
      r = ::recv(fd_, buffer, n, 0);
    } while (r < 0 && errno == EINTR);
    if (r < 0) not_connected(std::string("recv: ") + std::strerror(errno));
    return static_cast<std::size_t>(r);
  }

  void write_all(const std::string& bytes) override {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t w = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (w < 0 && errno == EINTR) continue;
      if (w <= 0) not_connected(std::string("send: ") + std::strerror(errno));
      off += static_cast<std::size_t>(w);
    }
  }

  bool wait_readable(std::chrono::milliseconds timeout) override { return poll_fd(fd_, POLLIN, timeout); }

  void shutdown() override { ::shutdown(fd_, SHUT_RDWR); }

 private:
  int fd_;
};

std::string ssl_error() {
  char buf[256];
  const unsigned long e = ERR_get_error();
  if (e == 0) return "unknown TLS error";
  ERR_error_string_n(e, buf, sizeof buf);
  return buf;
}

// OpenSSL objects are not safe for concurrent read and write, so every SSL call
// takes the lock; the reader only enters after poll says bytes are waiting.
class TlsStream final : public Stream {
 public:
  TlsStream(int fd, const TlsOptions& options) : fd_(fd) {
    ctx_ = SSL_CTX_new(TLS_client_method());
    if (!ctx_) fail("SSL_CTX_new");
    SSL_CTX_set_min_proto_version(ctx_, TLS1_2_VERSION);
    if (options.verify) {
      SSL_CTX_set_verify(ctx_, SSL_VERIFY_PEER, nullptr);
      const bool loaded = options.ca_file.empty()
                              ? SSL_CTX_set_default_verify_paths(ctx_) == 1
                              : SSL_CTX_load_verify_locations(ctx_, options.ca_file.c_str(), nullptr) == 1;
      if (!loaded) fail("loading CA certificates");
    }
    ssl_ = SSL_new(ctx_);
    if (!ssl_) fail("SSL_new");
    SSL_set_fd(ssl_, fd_);
    if (!options.server_name.empty()) {
      SSL_set_tlsext_host_name(ssl_, options.server_name.c_str());
      if (options.verify) SSL_set1_host(ssl_, options.server_name.c_str());
    }
    if (SSL_connect(ssl_) != 1) fail("TLS handshake with " + options.server_name);
  }

  ~TlsStream() override {
    if (ssl_) SSL_free(ssl_);
    if (ctx_) SSL_CTX_free(ctx_);
    ::close(fd_);
  }

  std::size_t read_some(char* buffer, std::size_t n) override {
    std::lock_guard lock(mutex_);
    const int r = SSL_read(ssl_, buffer, static_cast<int>(n));
    if (r > 0) return static_cast<std::size_t>(r);
    const int err = SSL_get_error(ssl_, r);
    if (err == SSL_ERROR_ZERO_RETURN) return 0;
    not_connected("TLS read: " + ssl_error());
  }

  void write_all(const std::string& bytes) override {
    std::lock_guard lock(mutex_);
    std::size_t off = 0;
    while (off < bytes.size()) {
      const int w = SSL_write(ssl_, bytes.data() + off, static_cast<int>(bytes.size() - off));
      if (w <= 0) not_connected("TLS write: " + ssl_error());
      off += static_cast<std::size_t>(w);
    }
  }

  bool wait_readable(std::chrono::milliseconds timeout) override {
    {
      std::lock_guard lock(mutex_);
      if (SSL_pending(ssl_) > 0) return true;
    }
    return poll_fd(fd_, POLLIN, timeout);
  }

  void shutdown() override { ::shutdown(fd_, SHUT_RDWR); }

 private:
  [[noreturn]] void fail(const std::string& what) {
    const std::string detail = ssl_error();
    if (ssl_) SSL_free(ssl_);
    if (ctx_) SSL_CTX_free(ctx_);
    ssl_ = nullptr;
    ctx_ = nullptr;
    ::close(fd_);
    throw MqttError(MqttError::Kind::TlsError, what + ": " + detail);
  }

  int fd_;
  SSL_CTX* ctx_ = nullptr;
  SSL* ssl_ = nullptr;
  std::mutex mutex_;
};

}  // namespace

std::shared_ptr<Stream> plain_stream(int fd) { return std::make_shared<PlainStream>(fd); }

int tcp_connect_fd(const std::string& host, int port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    not_connected("resolve " + host + ": " + gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      if (poll_fd(fd, POLLOUT, timeout)) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      // bounds blocking sends and the TLS handshake
      timeval tv{static_cast<time_t>(timeout.count() / 1000), static_cast<suseconds_t>(timeout.count() % 1000 * 1000)};
      ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      ::freeaddrinfo(res);
      return fd;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  not_connected("connect " + host + ":" + service + ": " + last_error);
}

std::shared_ptr<Stream> tcp_connect(const std::string& host, int port, std::chrono::milliseconds timeout) {
  return plain_stream(tcp_connect_fd(host, port, timeout));
}

std::shared_ptr<Stream> tls_client_stream(int fd, const TlsOptions& options) {
  return std::make_shared<TlsStream>(fd, options);
}

}  // namespace aq::mqtt
