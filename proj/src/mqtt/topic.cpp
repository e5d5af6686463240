#include "aq/mqtt/topic.hpp"

#include <charconv>
#include <vector>

namespace aq::mqtt {

namespace {

std::vector<std::string_view> levels(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto slash = s.find('/', start);
    if (slash == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, slash - start));
    start = slash + 1;
  }
}

}  // namespace

bool valid_topic(std::string_view topic) {
  if (topic.empty() || topic.size() > 65535) return false;
  if (topic.front() == '/' || topic.back() == '/') return false;
  return topic.find_first_of(std::string_view("+#\0", 3)) == std::string_view::npos;
}

bool valid_filter(std::string_view filter) {
  if (filter.empty() || filter.size() > 65535 || filter.find('\0') != std::string_view::npos) return false;
  const auto parts = levels(filter);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto p = parts[i];
    if (p.find_first_of("+#") == std::string_view::npos) continue;
    if (p.size() != 1) return false;
    if (p == "#" && i + 1 != parts.size()) return false;
  }
  return true;
}

void check_message(const TopicMessage& message) {
  if (!valid_topic(message.topic)) throw MqttError(MqttError::Kind::InvalidTopic, "invalid topic: " + message.topic);
  if (message.qos > 1) throw MqttError(MqttError::Kind::InvalidTopic, "only QoS 0 and 1 are supported");
}

bool topic_matches(std::string_view filter, std::string_view topic) {
  if (!topic.empty() && topic.front() == '$' && !filter.empty() && (filter.front() == '+' || filter.front() == '#')) {
    return false;
  }
  const auto f = levels(filter);
  const auto t = levels(topic);
  std::size_t i = 0;
  for (; i < f.size(); ++i) {
    if (f[i] == "#") return true;
    if (i >= t.size()) return false;
    if (f[i] != "+" && f[i] != t[i]) return false;
  }
  return i == t.size();
}

std::string topic_for(std::int64_t installation_id, Parameter parameter, TopicKind kind) {
  std::string t = "aq/" + std::to_string(installation_id) + "/" + std::string(key_of(parameter));
  if (kind == TopicKind::Forecast) t += "/forecast";
  return t;
}

std::optional<ParsedTopic> parse_topic(std::string_view topic) {
  const auto parts = levels(topic);
  if (parts.size() < 3 || parts.size() > 4 || parts[0] != "aq" || parts[2].empty()) return std::nullopt;
  if (parts.size() == 4 && parts[3] != "forecast") return std::nullopt;
  std::int64_t id = 0;
  const auto* end = parts[1].data() + parts[1].size();
  const auto [ptr, ec] = std::from_chars(parts[1].data(), end, id);
  if (ec != std::errc() || ptr != end || parts[1].empty()) return std::nullopt;
  return ParsedTopic{id, std::string(parts[2]), parts.size() == 4 ? TopicKind::Forecast : TopicKind::Measurement};
}

}  // namespace aq::mqtt
