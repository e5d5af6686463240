#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace aq::net {

/// Transport-level failure (DNS, connect, TLS, timeout). HTTP error statuses are not errors here.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HttpResult {
  long status = 0;
  std::string body;
  /// Header names lower-cased.
  std::map<std::string, std::string> headers;
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

HttpResult http_get(const std::string& url, const HeaderList& headers = {},
                    std::chrono::milliseconds timeout = std::chrono::seconds(15));

HttpResult http_post(const std::string& url, const std::string& body, const HeaderList& headers = {},
                     std::chrono::milliseconds timeout = std::chrono::seconds(15));

/// Pluggable transports so adapters can be tested without a network.
using HttpGet = std::function<HttpResult(const std::string& url, const HeaderList& headers)>;
using HttpPost = std::function<HttpResult(const std::string& url, const std::string& body, const HeaderList& headers)>;

HttpGet default_http_get();
HttpPost default_http_post();

struct SmtpEnvelope {
  std::string url;  // smtp://host:port or smtps://host:port
  std::string username;
  std::string password;
  bool require_tls = false;
  std::string from;
  std::vector<std::string> to;
  /// Full RFC 5322 message: headers, blank line, body.
  std::string payload;
};

/// Throws TransportError on any SMTP failure.
void smtp_send(const SmtpEnvelope& envelope, std::chrono::milliseconds timeout = std::chrono::seconds(30));

std::string url_encode(const std::string& s);

}  // namespace aq::net
