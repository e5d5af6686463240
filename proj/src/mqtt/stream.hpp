#pragma once

#include <chrono>
#include <memory>
#include <string>

namespace aq::mqtt {

/// Byte stream over a connected socket, optionally TLS.
class Stream {
 public:
  virtual ~Stream() = default;
  /// Returns 0 on orderly EOF; throws MqttError(NotConnected) on failure.
  virtual std::size_t read_some(char* buffer, std::size_t n) = 0;
  virtual void write_all(const std::string& bytes) = 0;
  virtual bool wait_readable(std::chrono::milliseconds timeout) = 0;
  /// Unblocks a concurrent reader; further I/O fails.
  virtual void shutdown() = 0;
};

/// Takes ownership of fd.
std::shared_ptr<Stream> plain_stream(int fd);

std::shared_ptr<Stream> tcp_connect(const std::string& host, int port, std::chrono::milliseconds timeout);

struct TlsOptions {
  bool verify = true;
  std::string ca_file;
  std::string server_name;
};

/// Client-side TLS handshake over a freshly connected socket (takes ownership of fd).
std::shared_ptr<Stream> tls_client_stream(int fd, const TlsOptions& options);

int tcp_connect_fd(const std::string& host, int port, std::chrono::milliseconds timeout);

}  // namespace aq::mqtt
