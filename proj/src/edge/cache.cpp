#include <charconv>
#include <mutex>

#include "aq/edge.hpp"
#include "json.hpp"

namespace aq::edge {

EdgeCache::EdgeCache(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

void EdgeCache::apply(const mqtt::TopicMessage& message, Instant received) {
  std::unique_lock lock(mutex_);
  const auto seq = next_sequence_++;
  if (auto it = entries_.find(message.topic); it != entries_.end()) {
    by_update_.erase(it->second.sequence);
    it->second = Slot{{message.payload, received}, seq};
  } else {
    if (entries_.size() >= capacity_) {
      const auto oldest = by_update_.begin();
      entries_.erase(oldest->second);
      by_update_.erase(oldest);
    }
    entries_.emplace(message.topic, Slot{{message.payload, received}, seq});
  }
  by_update_.emplace(seq, message.topic);
}

std::optional<CacheEntry> EdgeCache::get(const std::string& topic) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(topic);
  if (it == entries_.end()) return std::nullopt;
  return it->second.entry;
}

std::size_t EdgeCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::map<std::string, std::string> EdgeCache::payloads_for(std::int64_t installation_id, mqtt::TopicKind kind) const {
  const std::string prefix = "aq/" + std::to_string(installation_id) + "/";
  std::map<std::string, std::string> out;
  std::shared_lock lock(mutex_);
  for (auto it = entries_.lower_bound(prefix); it != entries_.end() && it->first.starts_with(prefix); ++it) {
    const auto parsed = mqtt::parse_topic(it->first);
    if (parsed && parsed->installation_id == installation_id && parsed->kind == kind) {
      out[parsed->parameter_key] = it->second.entry.payload;
    }
  }
  return out;
}

namespace {

HttpResponse error(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", message}}.dump()};
}

std::string object_of(const std::map<std::string, std::string>& payloads) {
  std::string body = "{";
  bool first = true;
  for (const auto& [key, payload] : payloads) {
    if (!first) body += ", ";
    first = false;
    body += nlohmann::json(key).dump() + ": ";
    // payloads are passed through untouched unless they would break the document
    body += nlohmann::json::accept(payload) ? payload : nlohmann::json(payload).dump();
  }
  return body + "}";
}

}  // namespace

HttpResponse serve_request(const EdgeCache& cache, const std::string& path,
                           const std::map<std::string, std::string>& query) {
  if (path == "/health") {
    return {200, nlohmann::json{{"status", "ok"}, {"topics", cache.size()}}.dump()};
  }
  if (path != "/current" && path != "/forecast") return error(404, "not found");

  const auto it = query.find("installation");
  if (it == query.end()) return error(400, "missing installation parameter");
  std::int64_t id = 0;
  const auto& text = it->second;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    return error(400, "installation must be an integer");
  }
  const auto kind = path == "/current" ? mqtt::TopicKind::Measurement : mqtt::TopicKind::Forecast;
  return {200, object_of(cache.payloads_for(id, kind))};
}

}  // namespace aq::edge
