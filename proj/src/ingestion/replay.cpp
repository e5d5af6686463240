#include <fstream>
#include <set>

#include "aq/ingestion.hpp"
#include "aq/time.hpp"
#include "json.hpp"

namespace aq::ingestion {

using nlohmann::json;

namespace {

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

FixtureRecord parse_fixture_line(const std::string& line) {
  const json j = json::parse(line);
  if (!j.is_object()) throw std::invalid_argument("record is not an object");

  FixtureRecord rec;
  const auto& id = j.at("installation_id");
  if (!id.is_number_integer()) throw std::invalid_argument("installation_id must be an integer");
  rec.installation_id = id.get<std::int64_t>();

  const auto& lat = j.at("lat");
  const auto& lon = j.at("lon");
  if (!lat.is_number() || !lon.is_number()) throw std::invalid_argument("lat/lon must be numbers");
  rec.point = GeoPoint(lat.get<double>(), lon.get<double>());

  const auto& ts = j.at("ts");
  if (!ts.is_string()) throw std::invalid_argument("ts must be a string");
  const auto parsed = parse_rfc3339(ts.get<std::string>());
  if (!parsed) throw std::invalid_argument("ts is not RFC3339: " + ts.get<std::string>());
  rec.timestamp = *parsed;

  const auto& values = j.at("values");
  if (!values.is_object()) throw std::invalid_argument("values must be an object");
  for (const auto& [key, v] : values.items()) {
    const auto p = parameter_from_key(key);
    if (!p || *p == Parameter::Aqi) throw std::invalid_argument("unknown parameter key: " + key);
    if (v.is_null()) continue;
    if (!v.is_number()) throw std::invalid_argument("value for " + key + " is not a number");
    rec.values[*p] = v.get<double>();
  }
  return rec;
}

ReplayProvider::ReplayProvider(std::vector<FixtureRecord> records) {
  for (auto& r : records) {
    installations_.try_emplace(r.installation_id, Installation{r.installation_id, r.point, std::nullopt, "replay"});
    // later lines overwrite earlier ones for the same timestamp
    records_[r.installation_id][r.timestamp] = RawMeasurement{r.timestamp, std::move(r.values)};
  }
}

void ReplayProvider::follow_clock(Clock clock) {
  std::lock_guard lock(mutex_);
  clock_ = std::move(clock);
}

std::vector<Installation> ReplayProvider::installations_near(const GeoPoint& point, double max_distance_km) {
  std::vector<Installation> out;
  for (const auto& [id, inst] : installations_) {
    if (haversine_km(point, inst.point) <= max_distance_km) out.push_back(inst);
  }
  return out;
}

RawBundle ReplayProvider::measurements(const Installation& installation) {
  const auto it = records_.find(installation.id);
  if (it == records_.end()) {
    throw IngestionError(IngestionError::Kind::UnknownInstallation,
                         "installation " + std::to_string(installation.id) + " not in fixture");
  }
  const auto& series = it->second;

  Clock clock;
  {
    std::lock_guard lock(mutex_);
    clock = clock_;
  }
  auto end = series.end();
  if (clock) end = series.upper_bound(clock());
  if (end == series.begin()) {
    throw IngestionError(IngestionError::Kind::NoMeasurements,
                         "installation " + std::to_string(installation.id) + " has no record at or before cursor");
  }

  RawBundle bundle;
  auto cur = std::prev(end);
  bundle.current = cur->second;
  const Instant from = cur->first - std::chrono::hours{24};
  for (auto h = series.lower_bound(from); h != cur; ++h) bundle.history.push_back(h->second);
  return bundle;
}

std::vector<Installation> ReplayProvider::installations() const {
  std::vector<Installation> out;
  for (const auto& [id, inst] : installations_) out.push_back(inst);
  return out;
}

std::vector<Instant> ReplayProvider::timestamps() const {
  std::set<Instant> all;
  for (const auto& [id, series] : records_) {
    for (const auto& [t, r] : series) all.insert(t);
  }
  return {all.begin(), all.end()};
}

std::shared_ptr<ReplayProvider> load_replay_provider(const std::filesystem::path& fixture_path) {
  std::error_code ec;
  std::ifstream in;
  if (std::filesystem::is_regular_file(fixture_path, ec)) in.open(fixture_path);
  if (!in.is_open()) {
    throw IngestionError(IngestionError::Kind::FixtureNotFound, "cannot open fixture " + fixture_path.string());
  }
  std::vector<FixtureRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (blank(line)) continue;
    try {
      records.push_back(parse_fixture_line(line));
    } catch (const std::exception& e) {
      throw IngestionError::fixture_parse(line_number, e.what());
    }
  }
  return std::make_shared<ReplayProvider>(std::move(records));
}

}  // namespace aq::ingestion
