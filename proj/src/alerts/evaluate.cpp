#include <cmath>
#include <cstdio>
#include <regex>

#include "aq/alerts.hpp"
#include "aq/time.hpp"

namespace aq::alerts {

ThresholdTable ThresholdTable::defaults() {
  ThresholdTable t;
  t.set(Parameter::Pm25, 15.0);
  t.set(Parameter::Pm10, 45.0);
  t.set(Parameter::Pm1, 15.0);
  t.set(Parameter::Aqi, 75.0);
  return t;
}

void ThresholdTable::set(Parameter p, double value) {
  if (!std::isfinite(value) || value <= 0.0) {
    throw AlertError(AlertError::Kind::InvalidThreshold,
                     "threshold for " + std::string(display_name(p)) + " must be positive");
  }
  values_[p] = value;
}

void ThresholdTable::unset(Parameter p) { values_.erase(p); }

std::optional<double> ThresholdTable::get(Parameter p) const {
  const auto it = values_.find(p);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<Instant> AlertState::last(std::int64_t installation_id, Parameter p) const {
  const auto it = last_.find({installation_id, p});
  if (it == last_.end()) return std::nullopt;
  return it->second;
}

void AlertState::record(std::int64_t installation_id, Parameter p, Instant at) {
  auto [it, inserted] = last_.try_emplace({installation_id, p}, at);
  if (!inserted && at > it->second) it->second = at;
}

std::vector<AlertEvent> evaluate(const Measurement& measurement, std::int64_t installation_id,
                                 const ThresholdTable& table, AlertState& state, std::chrono::seconds cooldown) {
  if (cooldown < std::chrono::seconds::zero()) cooldown = std::chrono::seconds::zero();
  std::vector<AlertEvent> events;
  for (const auto& [p, threshold] : table.entries()) {
    const auto value = measurement.get(p);
    if (!value || !(*value > threshold)) continue;
    if (const auto last = state.last(installation_id, p); last && measurement.timestamp - *last < cooldown) continue;
    events.push_back({installation_id, p, *value, threshold, measurement.timestamp, Severity::Exceeded});
    state.record(installation_id, p, measurement.timestamp);
  }
  return events;
}

bool valid_address(const std::string& address) {
  static const std::regex pattern(R"(^[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)*$)");
  return std::regex_match(address, pattern);
}

void check_message(const EmailMessage& message) {
  if (message.subject.empty() || message.body.empty()) {
    throw AlertError(AlertError::Kind::InvalidMessage, "email subject and body must be non-empty");
  }
  for (const auto& a : message.to) {
    if (!valid_address(a)) throw AlertError(AlertError::Kind::InvalidMessage, "invalid address: " + a);
  }
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

EmailMessage render_email(const AlertEvent& event, const Installation& installation,
                          std::vector<std::string> recipients) {
  const std::string name(display_name(event.parameter));
  const std::string unit(unit_of(event.parameter));
  const auto with_unit = [&](double v) { return unit.empty() ? format_value(v) : format_value(v) + " " + unit; };

  EmailMessage m;
  m.to = std::move(recipients);
  m.subject = "AIR QUALITY ALERT: " + name + " at installation " + std::to_string(event.installation_id);
  m.body = "The " + name + " value of the requested location is above the recommended safe level.\n\n" +
           "parameter: " + name + "\n" +
           "observed: " + with_unit(event.observed) + "\n" +
           "threshold: " + with_unit(event.threshold) + "\n" +
           "installation: " + std::to_string(installation.id) + "\n" +
           "location: " + format_value(installation.point.latitude()) + ", " +
           format_value(installation.point.longitude()) + "\n" +
           "time (UTC): " + format_rfc3339(event.timestamp) + "\n";
  m.timestamp = event.timestamp;
  return m;
}

}  // namespace aq::alerts
