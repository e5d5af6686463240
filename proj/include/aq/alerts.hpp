/**
 * @file alerts.hpp
 * @brief Safe-level evaluation, cooldown dedup, email rendering and notification sinks.
 */
#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aq/domain.hpp"
#include "aq/net/http_client.hpp"

namespace aq::alerts {

class AlertError : public std::runtime_error {
 public:
  enum class Kind { InvalidThreshold, InvalidMessage, DeliveryFailed, SinkMisconfigured, TransientFailure };

  AlertError(Kind kind, std::string message, int attempts = 0)
      : std::runtime_error(std::move(message)), kind_(kind), attempts_(attempts) {}

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  /// Total attempts made, for DeliveryFailed.
  [[nodiscard]] int attempts() const noexcept { return attempts_; }

 private:
  Kind kind_;
  int attempts_;
};

/// Safe-level upper bounds. Weather parameters are unset by default.
class ThresholdTable {
 public:
  ThresholdTable() = default;

  /// PM2.5 15, PM10 45, PM1 15 (ug/m3) and CAQI 75.
  static ThresholdTable defaults();

  /// Throws AlertError(InvalidThreshold) unless value is finite and positive.
  void set(Parameter p, double value);
  void unset(Parameter p);
  [[nodiscard]] std::optional<double> get(Parameter p) const;
  [[nodiscard]] const std::map<Parameter, double>& entries() const noexcept { return values_; }

  friend bool operator==(const ThresholdTable&, const ThresholdTable&) = default;

 private:
  std::map<Parameter, double> values_;
};

enum class Severity { Exceeded };

struct AlertEvent {
  std::int64_t installation_id = 0;
  Parameter parameter = Parameter::Pm25;
  double observed = 0.0;
  double threshold = 0.0;
  Instant timestamp{};
  Severity severity = Severity::Exceeded;

  friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

/// Last emitted alert per (installation, parameter).
class AlertState {
 public:
  [[nodiscard]] std::optional<Instant> last(std::int64_t installation_id, Parameter p) const;
  void record(std::int64_t installation_id, Parameter p, Instant at);
  [[nodiscard]] std::size_t size() const noexcept { return last_.size(); }

  friend bool operator==(const AlertState&, const AlertState&) = default;

 private:
  std::map<std::pair<std::int64_t, Parameter>, Instant> last_;
};

inline constexpr std::chrono::seconds kDefaultCooldown{3600};

/**
 * One event per present parameter strictly above its threshold, unless the same
 * (installation, parameter) fired less than `cooldown` before. Only emitted
 * events touch `state`.
 */
std::vector<AlertEvent> evaluate(const Measurement& measurement, std::int64_t installation_id,
                                 const ThresholdTable& table, AlertState& state,
                                 std::chrono::seconds cooldown = kDefaultCooldown);

struct EmailMessage {
  std::vector<std::string> to;
  std::string subject;
  std::string body;
  Instant timestamp{};

  friend bool operator==(const EmailMessage&, const EmailMessage&) = default;
};

bool valid_address(const std::string& address);

/// Throws AlertError(InvalidMessage) on empty subject/body or a malformed address.
void check_message(const EmailMessage& message);

/// Fixed-point with at most two decimals, trailing zeros trimmed: 75 -> "75", 12.345 -> "12.35".
std::string format_value(double v);

EmailMessage render_email(const AlertEvent& event, const Installation& installation,
                          std::vector<std::string> recipients = {});

// ---------------------------------------------------------------------------
// Sinks

/**
 * @brief Delivery channel. deliver() throws AlertError(TransientFailure) for
 * retryable failures and AlertError(SinkMisconfigured) for permanent ones.
 */
class NotificationSink {
 public:
  virtual ~NotificationSink() = default;
  [[nodiscard]] virtual std::string kind() const = 0;
  virtual void deliver(const EmailMessage& message) = 0;
};

/// Appends {"to","subject","body","ts"} as one JSON line per message.
class FileSink final : public NotificationSink {
 public:
  explicit FileSink(std::filesystem::path path);
  [[nodiscard]] std::string kind() const override { return "file"; }
  void deliver(const EmailMessage& message) override;

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

std::string to_json_line(const EmailMessage& message);

/// POSTs the message JSON with an optional bearer token; any non-2xx is transient.
class WebhookSink final : public NotificationSink {
 public:
  WebhookSink(std::string url, std::string bearer_token, net::HttpPost post = net::default_http_post());
  [[nodiscard]] std::string kind() const override { return "webhook"; }
  void deliver(const EmailMessage& message) override;

 private:
  std::string url_;
  std::string token_;
  net::HttpPost post_;
};

struct SmtpSettings {
  std::string host;
  int port = 587;
  std::string username;
  std::string password;
  std::string from;
  /// STARTTLS on plain ports, implicit TLS on 465.
  bool tls = true;
};

using SmtpSender = std::function<void(const net::SmtpEnvelope&)>;

class SmtpSink final : public NotificationSink {
 public:
  explicit SmtpSink(SmtpSettings settings, SmtpSender sender = nullptr);
  [[nodiscard]] std::string kind() const override { return "smtp"; }
  void deliver(const EmailMessage& message) override;

  /// RFC 5322 text with CRLF line endings.
  [[nodiscard]] std::string payload(const EmailMessage& message) const;

 private:
  SmtpSettings settings_;
  SmtpSender sender_;
};

struct SinkConfig {
  std::string kind = "file";  // file | webhook | smtp
  std::filesystem::path path;
  std::string url;
  std::string token;
  SmtpSettings smtp;
  std::vector<std::string> recipients;
};

/// Throws AlertError(SinkMisconfigured) for missing fields or unknown kinds.
std::unique_ptr<NotificationSink> make_sink(const SinkConfig& config);

struct DeliveryReceipt {
  std::string sink_kind;
  int attempts = 0;
  bool ok = false;
};

using Sleeper = std::function<void(std::chrono::seconds)>;
Sleeper real_sleeper();

inline constexpr int kMaxRetries = 3;

/// Up to 1 + kMaxRetries attempts with 1 s, 2 s, 4 s pauses; throws DeliveryFailed(4) on exhaustion.
DeliveryReceipt dispatch(NotificationSink& sink, const EmailMessage& message, const Sleeper& sleep = real_sleeper());

}  // namespace aq::alerts
