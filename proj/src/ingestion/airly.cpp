// Everything that knows the airly v2 wire format lives in this file.
#include <cstdlib>

#include "aq/ingestion.hpp"
#include "aq/time.hpp"
#include "json.hpp"

namespace aq::ingestion {

using nlohmann::json;

namespace {

IngestionError malformed(const std::string& detail) {
  return IngestionError(IngestionError::Kind::MalformedResponse, detail);
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw malformed(std::string("response is not JSON: ") + e.what());
  }
}

Installation installation_from(const json& j) {
  if (!j.is_object()) throw malformed("installation entry is not an object");
  const auto id = j.find("id");
  const auto loc = j.find("location");
  if (id == j.end() || !id->is_number_integer()) throw malformed("installation without integer id");
  if (loc == j.end() || !loc->is_object()) throw malformed("installation without location");
  const auto lat = loc->find("latitude");
  const auto lon = loc->find("longitude");
  if (lat == loc->end() || lon == loc->end() || !lat->is_number() || !lon->is_number()) {
    throw malformed("installation location without coordinates");
  }
  Installation inst;
  inst.id = id->get<std::int64_t>();
  try {
    inst.point = GeoPoint(lat->get<double>(), lon->get<double>());
  } catch (const DomainError& e) {
    throw malformed(e.what());
  }
  if (const auto el = j.find("elevation"); el != j.end() && el->is_number()) inst.elevation_m = el->get<double>();
  inst.provider_name = "airly";
  return inst;
}

// Airly labels windows by [fromDateTime, tillDateTime). The running "current"
// window is labelled by the hour it closes in, completed windows by the hour they open.
RawMeasurement record_from(const json& j, const char* time_field) {
  if (!j.is_object()) throw malformed("measurement entry is not an object");
  RawMeasurement raw;
  if (const auto t = j.find(time_field); t != j.end() && t->is_string()) {
    raw.timestamp = parse_rfc3339(t->get<std::string>());
    if (!raw.timestamp) throw malformed("bad timestamp " + t->get<std::string>());
  }
  const auto values = j.find("values");
  if (values == j.end()) return raw;
  if (!values->is_array()) throw malformed("values is not an array");
  for (const auto& v : *values) {
    const auto name = v.find("name");
    const auto value = v.find("value");
    if (name == v.end() || !name->is_string() || value == v.end()) throw malformed("value entry without name/value");
    const auto p = parameter_from_key(name->get<std::string>());
    if (!p || *p == Parameter::Aqi) continue;  // e.g. WIND_SPEED, NO2
    if (value->is_null()) continue;
    if (!value->is_number()) throw malformed("non-numeric value for " + name->get<std::string>());
    raw.values[*p] = value->get<double>();
  }
  return raw;
}

}  // namespace

std::vector<Installation> parse_airly_installations(const std::string& body) {
  const json j = parse_body(body);
  if (!j.is_array()) throw malformed("installations response is not an array");
  std::vector<Installation> out;
  for (const auto& e : j) out.push_back(installation_from(e));
  return out;
}

RawBundle parse_airly_measurements(const std::string& body) {
  const json j = parse_body(body);
  if (!j.is_object()) throw malformed("measurements response is not an object");
  const auto current = j.find("current");
  if (current == j.end()) throw malformed("measurements response without current");
  RawBundle bundle;
  bundle.current = record_from(*current, "tillDateTime");
  if (bundle.current.timestamp) bundle.current.timestamp = floor_hour(*bundle.current.timestamp);
  if (const auto h = j.find("history"); h != j.end() && h->is_array()) {
    for (const auto& e : *h) bundle.history.push_back(record_from(e, "fromDateTime"));
  }
  if (const auto f = j.find("forecast"); f != j.end() && f->is_array()) {
    for (const auto& e : *f) bundle.forecast.push_back(record_from(e, "fromDateTime"));
  }
  return bundle;
}

AirlyProvider::AirlyProvider(AirlyOptions options, net::HttpGet get)
    : options_(std::move(options)), get_(std::move(get)) {
  if (!get_) get_ = net::default_http_get();
}

std::string AirlyProvider::request(const std::string& url) {
  net::HttpResult r;
  try {
    r = get_(url, {{"Accept", "application/json"}, {"apikey", options_.api_key}});
  } catch (const net::TransportError& e) {
    throw IngestionError(IngestionError::Kind::ProviderUnavailable, e.what());
  }
  if (r.status == 429) {
    long seconds = 60;
    if (const auto h = r.headers.find("retry-after"); h != r.headers.end()) {
      char* end = nullptr;
      const long parsed = std::strtol(h->second.c_str(), &end, 10);
      if (end != h->second.c_str() && parsed >= 0) seconds = parsed;
    }
    throw IngestionError::rate_limited(std::chrono::seconds{seconds});
  }
  if (r.status < 200 || r.status >= 300) {
    throw IngestionError(IngestionError::Kind::ProviderUnavailable,
                         "provider answered HTTP " + std::to_string(r.status) + " for " + url);
  }
  return r.body;
}

std::vector<Installation> AirlyProvider::installations_near(const GeoPoint& point, double max_distance_km) {
  char query[160];
  std::snprintf(query, sizeof query, "?lat=%.6f&lng=%.6f&maxDistanceKM=%.3f&maxResults=%d", point.latitude(),
                point.longitude(), max_distance_km, options_.max_results);
  return parse_airly_installations(request(options_.base_url + options_.nearest_path + query));
}

RawBundle AirlyProvider::measurements(const Installation& installation) {
  return parse_airly_measurements(request(options_.base_url + options_.measurements_path +
                                          "?installationId=" + std::to_string(installation.id)));
}

}  // namespace aq::ingestion
