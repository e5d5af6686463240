#include "aq/store.hpp"

#include <algorithm>
#include <cstring>
#include "json.hpp"
#include <string>

namespace aq {

using json = nlohmann::json;

namespace {

constexpr const char* kSnapshotFormat = "aq-series-snapshot";

json point_line(const SeriesKey& key, Instant t, double v) {
  return json{{"i", key.installation_id}, {"p", key_of(key.parameter)}, {"t", format_rfc3339(t)}, {"v", v}};
}

std::pair<SeriesKey, SeriesPoint> parse_point_line(const json& j) {
  const auto param = parameter_from_key(j.at("p").get<std::string>());
  const auto t = parse_rfc3339(j.at("t").get<std::string>());
  if (!param || !t) throw std::invalid_argument("bad parameter or timestamp");
  return {SeriesKey{j.at("i").get<std::int64_t>(), *param}, SeriesPoint{*t, j.at("v").get<double>()}};
}

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
}

}  // namespace

std::vector<SeriesPoint> hourly_aggregate(std::span<const std::pair<Instant, double>> samples) {
  std::map<Instant, std::vector<double>> groups;
  for (const auto& [t, v] : samples) groups[floor_hour(t)].push_back(v);

  std::vector<SeriesPoint> out;
  out.reserve(groups.size());
  for (auto& [hour, values] : groups) {
    // sorted summation keeps the mean bit-identical under input permutation
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    out.push_back({hour, sum / static_cast<double>(values.size())});
  }
  return out;
}

SeriesStore::SeriesStore(StoreOptions options) : options_(options) {}

SeriesStore::~SeriesStore() = default;

SeriesStore::Series& SeriesStore::series_for_write(const SeriesKey& key) {
  {
    std::shared_lock lock(index_mutex_);
    if (auto it = index_.find(key); it != index_.end()) return *it->second;
  }
  std::unique_lock lock(index_mutex_);
  auto& slot = index_[key];
  if (!slot) slot = std::make_unique<Series>();
  return *slot;
}

const SeriesStore::Series* SeriesStore::find(const SeriesKey& key) const {
  std::shared_lock lock(index_mutex_);
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : it->second.get();
}

void SeriesStore::apply(const SeriesKey& key, const SeriesPoint& point) {
  Series& s = series_for_write(key);
  std::unique_lock lock(s.mutex);
  auto [it, inserted] = s.points.insert_or_assign(point.timestamp, point.value);
  if (inserted) ++total_points_;
}

void SeriesStore::append(const SeriesKey& key, const SeriesPoint& point) {
  if (!is_hour_aligned(point.timestamp)) {
    throw StoreError(StoreError::Kind::UnalignedTimestamp,
                     "timestamp not aligned to the hour: " + format_rfc3339(point.timestamp));
  }
  if (total_points_.load() >= options_.max_points) {
    // overwrites of an existing hour are still allowed at capacity
    const Series* s = find(key);
    bool exists = false;
    if (s) {
      std::shared_lock lock(s->mutex);
      exists = s->points.contains(point.timestamp);
    }
    if (!exists) throw StoreError(StoreError::Kind::StorageFull, "store holds the maximum number of points");
  }
  if (journal_.is_open()) {
    std::lock_guard lock(journal_mutex_);
    journal_ << point_line(key, point.timestamp, point.value).dump() << '\n';
    journal_.flush();
    if (!journal_) throw StoreError(StoreError::Kind::IoError, "journal write failed");
  }
  apply(key, point);
}

std::vector<SeriesPoint> SeriesStore::query_range(const SeriesKey& key, Instant from, Instant to) const {
  if (from > to) throw StoreError(StoreError::Kind::InvertedRange, "query range is inverted");
  std::vector<SeriesPoint> out;
  const Series* s = find(key);
  if (!s) return out;
  std::shared_lock lock(s->mutex);
  for (auto it = s->points.lower_bound(from); it != s->points.end() && it->first < to; ++it) {
    out.push_back({it->first, it->second});
  }
  return out;
}

std::optional<SeriesPoint> SeriesStore::latest(const SeriesKey& key) const {
  const Series* s = find(key);
  if (!s) return std::nullopt;
  std::shared_lock lock(s->mutex);
  if (s->points.empty()) return std::nullopt;
  const auto& [t, v] = *s->points.rbegin();
  return SeriesPoint{t, v};
}

std::vector<SeriesKey> SeriesStore::keys() const {
  std::shared_lock lock(index_mutex_);
  std::vector<SeriesKey> out;
  for (const auto& [k, s] : index_) {
    std::shared_lock slock(s->mutex);
    if (!s->points.empty()) out.push_back(k);
  }
  return out;
}

std::vector<SeriesKey> SeriesStore::keys_for(std::int64_t installation_id) const {
  auto all = keys();
  std::erase_if(all, [&](const SeriesKey& k) { return k.installation_id != installation_id; });
  return all;
}

std::size_t SeriesStore::point_count() const { return total_points_.load(); }

std::size_t SeriesStore::compact(Instant now) {
  const Instant cutoff = now - options_.retention;
  std::shared_lock lock(index_mutex_);
  std::size_t removed = 0;
  for (auto& [k, s] : index_) {
    std::unique_lock slock(s->mutex);
    auto end = s->points.lower_bound(cutoff);
    removed += static_cast<std::size_t>(std::distance(s->points.begin(), end));
    s->points.erase(s->points.begin(), end);
  }
  total_points_ -= removed;
  return removed;
}

SeriesStore::Contents SeriesStore::contents() const {
  Contents out;
  std::shared_lock lock(index_mutex_);
  for (const auto& [k, s] : index_) {
    std::shared_lock slock(s->mutex);
    if (!s->points.empty()) out.emplace(k, s->points);
  }
  return out;
}

std::uint64_t SeriesStore::fingerprint() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& [k, points] : contents()) {
    fnv_mix(h, &k.installation_id, sizeof k.installation_id);
    const auto p = static_cast<std::uint8_t>(k.parameter);
    fnv_mix(h, &p, 1);
    for (const auto& [t, v] : points) {
      const auto secs = t.time_since_epoch().count();
      fnv_mix(h, &secs, sizeof secs);
      fnv_mix(h, &v, sizeof v);
    }
  }
  return h;
}

void SeriesStore::save_snapshot(const std::filesystem::path& path) const {
  const auto data = contents();
  std::size_t n = 0;
  for (const auto& [k, points] : data) n += points.size();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw StoreError(StoreError::Kind::IoError, "cannot write snapshot " + tmp.string());
    out << json{{"format", kSnapshotFormat}, {"version", kSnapshotVersion}, {"points", n}}.dump() << '\n';
    for (const auto& [k, points] : data) {
      for (const auto& [t, v] : points) out << point_line(k, t, v).dump() << '\n';
    }
    out.flush();
    if (!out) throw StoreError(StoreError::Kind::IoError, "snapshot write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StoreError(StoreError::Kind::IoError, "cannot move snapshot into place: " + ec.message());
}

void SeriesStore::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError(StoreError::Kind::IoError, "cannot read snapshot " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw StoreError(StoreError::Kind::CorruptSnapshot, "snapshot is empty");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception&) {
    throw StoreError(StoreError::Kind::CorruptSnapshot, "snapshot header is not JSON");
  }
  if (header.value("format", "") != kSnapshotFormat)
    throw StoreError(StoreError::Kind::CorruptSnapshot, "not a series snapshot");
  if (header.value("version", -1) != kSnapshotVersion) {
    throw StoreError(StoreError::Kind::VersionMismatch,
                     "unsupported snapshot version " + header.value("version", json(-1)).dump());
  }

  std::vector<std::pair<SeriesKey, SeriesPoint>> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      points.push_back(parse_point_line(json::parse(line)));
    } catch (const std::exception& e) {
      throw StoreError(StoreError::Kind::CorruptSnapshot,
                       "snapshot line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (points.size() != header.value("points", std::size_t{0}))
    throw StoreError(StoreError::Kind::CorruptSnapshot, "snapshot point count mismatch");

  {
    std::unique_lock lock(index_mutex_);
    index_.clear();
    total_points_ = 0;
  }
  for (const auto& [k, p] : points) apply(k, p);
}

void SeriesStore::attach_journal(const std::filesystem::path& path) {
  std::lock_guard lock(journal_mutex_);
  if (std::ifstream in{path}) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto [k, p] = parse_point_line(json::parse(line));
        apply(k, p);
      } catch (const std::exception&) {
        // a torn final line from a crash mid-write is skipped
      }
    }
  }
  journal_.open(path, std::ios::app);
  if (!journal_) throw StoreError(StoreError::Kind::IoError, "cannot open journal " + path.string());
}

}  // namespace aq
