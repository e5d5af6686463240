#include <fstream>
#include <thread>

#include "aq/alerts.hpp"
#include "aq/time.hpp"
#include "json.hpp"

namespace aq::alerts {

using nlohmann::ordered_json;

std::string to_json_line(const EmailMessage& message) {
  ordered_json j;
  j["to"] = message.to;
  j["subject"] = message.subject;
  j["body"] = message.body;
  j["ts"] = format_rfc3339(message.timestamp);
  return j.dump();
}

FileSink::FileSink(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty()) throw AlertError(AlertError::Kind::SinkMisconfigured, "file sink needs a path");
}

void FileSink::deliver(const EmailMessage& message) {
  check_message(message);
  const std::string line = to_json_line(message) + "\n";
  std::lock_guard lock(mutex_);
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw AlertError(AlertError::Kind::TransientFailure, "cannot open " + path_.string());
  out << line;
  out.flush();
  if (!out) throw AlertError(AlertError::Kind::TransientFailure, "write to " + path_.string() + " failed");
}

WebhookSink::WebhookSink(std::string url, std::string bearer_token, net::HttpPost post)
    : url_(std::move(url)), token_(std::move(bearer_token)), post_(std::move(post)) {
  if (url_.empty()) throw AlertError(AlertError::Kind::SinkMisconfigured, "webhook sink needs a url");
  if (!post_) post_ = net::default_http_post();
}

void WebhookSink::deliver(const EmailMessage& message) {
  check_message(message);
  net::HeaderList headers{{"Content-Type", "application/json"}};
  if (!token_.empty()) headers.emplace_back("Authorization", "Bearer " + token_);
  net::HttpResult r;
  try {
    r = post_(url_, to_json_line(message), headers);
  } catch (const net::TransportError& e) {
    throw AlertError(AlertError::Kind::TransientFailure, e.what());
  }
  if (r.status < 200 || r.status >= 300) {
    throw AlertError(AlertError::Kind::TransientFailure, "webhook answered HTTP " + std::to_string(r.status));
  }
}

SmtpSink::SmtpSink(SmtpSettings settings, SmtpSender sender)
    : settings_(std::move(settings)), sender_(std::move(sender)) {
  if (settings_.host.empty() || settings_.from.empty()) {
    throw AlertError(AlertError::Kind::SinkMisconfigured, "smtp sink needs host and from");
  }
  if (!valid_address(settings_.from)) {
    throw AlertError(AlertError::Kind::SinkMisconfigured, "invalid from address: " + settings_.from);
  }
  if (!sender_) sender_ = [](const net::SmtpEnvelope& env) { net::smtp_send(env); };
}

namespace {

std::string rfc5322_date(Instant t) {
  using namespace std::chrono;
  static constexpr const char* kDays[] = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
  static constexpr const char* kMonths[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                            "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s, %02u %s %d %02ld:%02ld:%02ld +0000", kDays[weekday{day}.c_encoding()],
                static_cast<unsigned>(ymd.day()), kMonths[static_cast<unsigned>(ymd.month()) - 1],
                static_cast<int>(ymd.year()), static_cast<long>(hms.hours().count()),
                static_cast<long>(hms.minutes().count()), static_cast<long>(hms.seconds().count()));
  return buf;
}

}  // namespace

std::string SmtpSink::payload(const EmailMessage& message) const {
  std::string to;
  for (const auto& a : message.to) to += (to.empty() ? "" : ", ") + a;
  std::string body;
  for (char c : message.body) {
    if (c == '\n') body += "\r\n";
    else body += c;
  }
  return "Date: " + rfc5322_date(message.timestamp) + "\r\n" +
         "From: " + settings_.from + "\r\n" +
         "To: " + to + "\r\n" +
         "Subject: " + message.subject + "\r\n" +
         "MIME-Version: 1.0\r\n"
         "Content-Type: text/plain; charset=utf-8\r\n"
         "\r\n" +
         body;
}

void SmtpSink::deliver(const EmailMessage& message) {
  check_message(message);
  if (message.to.empty()) throw AlertError(AlertError::Kind::SinkMisconfigured, "smtp sink has no recipients");
  net::SmtpEnvelope env;
  const bool implicit_tls = settings_.tls && settings_.port == 465;
  env.url = std::string(implicit_tls ? "smtps://" : "smtp://") + settings_.host + ":" + std::to_string(settings_.port);
  env.username = settings_.username;
  env.password = settings_.password;
  env.require_tls = settings_.tls;
  env.from = settings_.from;
  env.to = message.to;
  env.payload = payload(message);
  try {
    sender_(env);
  } catch (const net::TransportError& e) {
    throw AlertError(AlertError::Kind::TransientFailure, e.what());
  }
}

std::unique_ptr<NotificationSink> make_sink(const SinkConfig& config) {
  if (config.kind == "file") return std::make_unique<FileSink>(config.path);
  if (config.kind == "webhook") return std::make_unique<WebhookSink>(config.url, config.token);
  if (config.kind == "smtp") return std::make_unique<SmtpSink>(config.smtp);
  throw AlertError(AlertError::Kind::SinkMisconfigured, "unknown sink kind: " + config.kind);
}

Sleeper real_sleeper() {
  return [](std::chrono::seconds s) { std::this_thread::sleep_for(s); };
}

DeliveryReceipt dispatch(NotificationSink& sink, const EmailMessage& message, const Sleeper& sleep) {
  DeliveryReceipt receipt{sink.kind(), 0, false};
  std::string last_error;
  std::chrono::seconds backoff{1};
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    if (attempt > 0) {
      if (sleep) sleep(backoff);
      backoff *= 2;
    }
    ++receipt.attempts;
    try {
      sink.deliver(message);
      receipt.ok = true;
      return receipt;
    } catch (const AlertError& e) {
      if (e.kind() != AlertError::Kind::TransientFailure) throw;
      last_error = e.what();
    }
  }
  throw AlertError(AlertError::Kind::DeliveryFailed,
                   "delivery via " + receipt.sink_kind + " failed after " + std::to_string(receipt.attempts) +
                       " attempts: " + last_error,
                   receipt.attempts);
}

}  // namespace aq::alerts
