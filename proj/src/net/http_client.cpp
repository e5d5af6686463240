#include "aq/net/http_client.hpp"

#include <curl/curl.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <memory>
#include <mutex>

namespace aq::net {

namespace {

void global_init() {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

struct CurlDeleter {
  void operator()(CURL* c) const { curl_easy_cleanup(c); }
};
struct SlistDeleter {
  void operator()(curl_slist* l) const { curl_slist_free_all(l); }
};
using CurlHandle = std::unique_ptr<CURL, CurlDeleter>;
using Slist = std::unique_ptr<curl_slist, SlistDeleter>;

std::size_t write_body(char* data, std::size_t size, std::size_t n, void* user) {
  static_cast<std::string*>(user)->append(data, size * n);
  return size * n;
}

std::size_t write_header(char* data, std::size_t size, std::size_t n, void* user) {
  std::string line(data, size * n);
  const auto colon = line.find(':');
  if (colon != std::string::npos) {
    std::string name = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto first = value.find_first_not_of(" \t");
    const auto last = value.find_last_not_of(" \t\r\n");
    value = first == std::string::npos ? "" : value.substr(first, last - first + 1);
    (*static_cast<std::map<std::string, std::string>*>(user))[name] = value;
  }
  return size * n;
}

Slist make_headers(const HeaderList& headers) {
  curl_slist* list = nullptr;
  for (const auto& [k, v] : headers) list = curl_slist_append(list, (k + ": " + v).c_str());
  return Slist(list);
}

HttpResult perform(const std::string& url, const std::string* post_body, const HeaderList& headers,
                   std::chrono::milliseconds timeout) {
  global_init();
  CurlHandle curl(curl_easy_init());
  if (!curl) throw TransportError("curl_easy_init failed");

  HttpResult result;
  auto header_list = make_headers(headers);
  char error[CURL_ERROR_SIZE] = {0};
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_HTTPHEADER, header_list.get());
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, write_body);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &result.body);
  curl_easy_setopt(curl.get(), CURLOPT_HEADERFUNCTION, write_header);
  curl_easy_setopt(curl.get(), CURLOPT_HEADERDATA, &result.headers);
  curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT_MS, static_cast<long>(timeout.count()));
  curl_easy_setopt(curl.get(), CURLOPT_NOSIGNAL, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_ERRORBUFFER, error);
  curl_easy_setopt(curl.get(), CURLOPT_ACCEPT_ENCODING, "");
  if (post_body) {
    curl_easy_setopt(curl.get(), CURLOPT_POST, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_POSTFIELDS, post_body->data());
    curl_easy_setopt(curl.get(), CURLOPT_POSTFIELDSIZE, static_cast<long>(post_body->size()));
  }
  const CURLcode rc = curl_easy_perform(curl.get());
  if (rc != CURLE_OK) {
    throw TransportError(std::string("request to ") + url + " failed: " +
                         (error[0] ? error : curl_easy_strerror(rc)));
  }
  curl_easy_getinfo(curl.get(), CURLINFO_RESPONSE_CODE, &result.status);
  return result;
}

struct ReadCursor {
  const std::string* data;
  std::size_t offset = 0;
};

std::size_t read_payload(char* buffer, std::size_t size, std::size_t n, void* user) {
  auto* cur = static_cast<ReadCursor*>(user);
  const std::size_t room = size * n;
  const std::size_t left = cur->data->size() - cur->offset;
  const std::size_t take = std::min(room, left);
  std::memcpy(buffer, cur->data->data() + cur->offset, take);
  cur->offset += take;
  return take;
}

}  // namespace

HttpResult http_get(const std::string& url, const HeaderList& headers, std::chrono::milliseconds timeout) {
  return perform(url, nullptr, headers, timeout);
}

HttpResult http_post(const std::string& url, const std::string& body, const HeaderList& headers,
                     std::chrono::milliseconds timeout) {
  return perform(url, &body, headers, timeout);
}

HttpGet default_http_get() {
  return [](const std::string& url, const HeaderList& headers) { return http_get(url, headers); };
}

HttpPost default_http_post() {
  return [](const std::string& url, const std::string& body, const HeaderList& headers) {
    return http_post(url, body, headers);
  };
}

void smtp_send(const SmtpEnvelope& env, std::chrono::milliseconds timeout) {
  global_init();
  CurlHandle curl(curl_easy_init());
  if (!curl) throw TransportError("curl_easy_init failed");

  curl_slist* rcpt = nullptr;
  for (const auto& to : env.to) rcpt = curl_slist_append(rcpt, ("<" + to + ">").c_str());
  Slist recipients(rcpt);
  const std::string from = "<" + env.from + ">";
  ReadCursor cursor{&env.payload};
  char error[CURL_ERROR_SIZE] = {0};

  curl_easy_setopt(curl.get(), CURLOPT_URL, env.url.c_str());
  if (!env.username.empty()) {
    curl_easy_setopt(curl.get(), CURLOPT_USERNAME, env.username.c_str());
    curl_easy_setopt(curl.get(), CURLOPT_PASSWORD, env.password.c_str());
  }
  if (env.require_tls) curl_easy_setopt(curl.get(), CURLOPT_USE_SSL, static_cast<long>(CURLUSESSL_ALL));
  curl_easy_setopt(curl.get(), CURLOPT_MAIL_FROM, from.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_MAIL_RCPT, recipients.get());
  curl_easy_setopt(curl.get(), CURLOPT_READFUNCTION, read_payload);
  curl_easy_setopt(curl.get(), CURLOPT_READDATA, &cursor);
  curl_easy_setopt(curl.get(), CURLOPT_UPLOAD, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT_MS, static_cast<long>(timeout.count()));
  curl_easy_setopt(curl.get(), CURLOPT_NOSIGNAL, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_ERRORBUFFER, error);
  const CURLcode rc = curl_easy_perform(curl.get());
  if (rc != CURLE_OK) {
    throw TransportError(std::string("SMTP delivery via ") + env.url + " failed: " +
                         (error[0] ? error : curl_easy_strerror(rc)));
  }
}

std::string url_encode(const std::string& s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

}  // namespace aq::net
