#include <algorithm>
#include <cmath>
#include <set>

#include "aq/service.hpp"
#include "aq/time.hpp"
#include "json.hpp"

namespace aq::service {

using nlohmann::ordered_json;

std::size_t PollReport::error_count() const {
  std::size_t n = 0;
  for (const auto& l : locations) n += l.errors.size();
  return n;
}

void PollReport::merge(const PollReport& later) {
  if (ticks == 0) {
    *this = later;
    return;
  }
  cycle_start = std::min(cycle_start, later.cycle_start);
  cycle_end = std::max(cycle_end, later.cycle_end);
  ticks += later.ticks;
  for (std::size_t i = 0; i < later.locations.size(); ++i) {
    if (i >= locations.size()) {
      locations.push_back(later.locations[i]);
      continue;
    }
    auto& a = locations[i];
    const auto& b = later.locations[i];
    if (b.installation_id) a.installation_id = b.installation_id;
    a.records_ingested += b.records_ingested;
    a.records_dropped += b.records_dropped;
    a.points_appended += b.points_appended;
    a.forecasts += b.forecasts;
    a.forecasts_skipped += b.forecasts_skipped;
    a.alerts += b.alerts;
    a.published += b.published;
    a.errors.insert(a.errors.end(), b.errors.begin(), b.errors.end());
  }
}

std::string to_json(const PollReport& report) {
  ordered_json j;
  j["cycle_start"] = format_rfc3339(report.cycle_start);
  j["cycle_end"] = format_rfc3339(report.cycle_end);
  j["ticks"] = report.ticks;
  std::set<std::int64_t> installations;
  ordered_json totals = {{"records_ingested", 0}, {"records_dropped", 0}, {"points_appended", 0}, {"forecasts", 0},
                         {"alerts", 0},           {"published", 0},       {"errors", 0}};
  j["locations"] = ordered_json::array();
  for (const auto& l : report.locations) {
    ordered_json o;
    o["lat"] = l.location.latitude();
    o["lon"] = l.location.longitude();
    o["installation_id"] = l.installation_id ? ordered_json(*l.installation_id) : ordered_json(nullptr);
    o["records_ingested"] = l.records_ingested;
    o["records_dropped"] = l.records_dropped;
    o["points_appended"] = l.points_appended;
    o["forecasts"] = l.forecasts;
    o["forecasts_skipped"] = l.forecasts_skipped;
    o["alerts"] = l.alerts;
    o["published"] = l.published;
    o["errors"] = l.errors;
    j["locations"].push_back(o);
    if (l.installation_id) installations.insert(*l.installation_id);
    totals["records_ingested"] = totals["records_ingested"].get<std::size_t>() + l.records_ingested;
    totals["records_dropped"] = totals["records_dropped"].get<std::size_t>() + l.records_dropped;
    totals["points_appended"] = totals["points_appended"].get<std::size_t>() + l.points_appended;
    totals["forecasts"] = totals["forecasts"].get<std::size_t>() + l.forecasts;
    totals["alerts"] = totals["alerts"].get<std::size_t>() + l.alerts;
    totals["published"] = totals["published"].get<std::size_t>() + l.published;
    totals["errors"] = totals["errors"].get<std::size_t>() + l.errors.size();
  }
  totals["installations"] = installations.size();
  j["totals"] = totals;
  return j.dump(2);
}

Service::Service(ServiceConfig config, ServiceParts parts) : config_(std::move(config)), parts_(std::move(parts)) {
  if (!parts_.provider || !parts_.store || !parts_.gateway || !parts_.sink) {
    throw ConfigError("service needs a provider, store, gateway and sink");
  }
  if (!parts_.lookup_provider) parts_.lookup_provider = parts_.provider;
}

std::optional<forecast::ForecastSet> Service::forecast_for(const SeriesKey& key) const {
  std::shared_lock lock(mutex_);
  const auto it = forecasts_.find(key);
  if (it == forecasts_.end()) return std::nullopt;
  return it->second;
}

alerts::AlertState Service::alert_state() const {
  std::shared_lock lock(mutex_);
  return alert_state_;
}

PollReport Service::scheduler_tick(Instant now) {
  std::lock_guard tick(tick_mutex_);
  PollReport report;
  report.cycle_start = now;
  report.ticks = 1;
  parts_.gateway->flush();
  for (std::size_t i = 0; i < config_.locations.size(); ++i) {
    LocationReport r;
    r.location = config_.locations[i];
    try {
      process(i, now, r);
    } catch (const std::exception& e) {
      r.errors.push_back(e.what());
    }
    report.locations.push_back(std::move(r));
  }
  report.cycle_end = now;
  return report;
}

void Service::run_forecasts(const Installation& inst, Instant at, LocationReport& report,
                            std::vector<forecast::ForecastSet>& produced) {
  for (const auto& key : parts_.store->keys_for(inst.id)) {
    const auto series =
        parts_.store->query_range(key, at - config_.forecast.history + std::chrono::hours{1}, at + std::chrono::hours{1});
    auto params = config_.forecast.params;
    const auto window = forecast::usable_window(series.size(), params);
    if (!window) {
      ++report.forecasts_skipped;
      continue;
    }
    params.window = *window;
    try {
      auto set = forecast::forecast_next(series, key.parameter, params);
      {
        std::unique_lock lock(mutex_);
        forecasts_.insert_or_assign(key, set);
      }
      produced.push_back(std::move(set));
      ++report.forecasts;
    } catch (const forecast::ForecastError& e) {
      // gaps can leave too few rows even when the raw length fits
      if (e.kind() == forecast::ForecastError::Kind::SeriesTooShort) {
        ++report.forecasts_skipped;
      } else {
        report.errors.push_back(std::string("forecast ") + std::string(key_of(key.parameter)) + ": " + e.what());
      }
    }
  }
}

void Service::process(std::size_t index, Instant now, LocationReport& report) {
  (void)now;
  const auto inst =
      ingestion::nearest_installation(*parts_.provider, config_.locations[index], config_.max_distance_km);
  report.installation_id = inst.id;
  const auto bundle = ingestion::fetch_measurements(*parts_.provider, inst);
  report.records_dropped = bundle.dropped;

  auto ingest = [&](const Measurement& m) {
    for (auto p : kAllParameters) {
      if (const auto v = m.get(p)) {
        parts_.store->append({inst.id, p}, {m.timestamp, *v});
        ++report.points_appended;
      }
    }
    ++report.records_ingested;
  };
  try {
    for (const auto& m : bundle.history) ingest(m);
    ingest(bundle.current);
  } catch (const StoreError& e) {
    report.errors.push_back(std::string("store: ") + e.what());
  }

  std::vector<forecast::ForecastSet> produced;
  run_forecasts(inst, bundle.current.timestamp, report, produced);

  std::vector<alerts::AlertEvent> events;
  {
    std::unique_lock lock(mutex_);
    events = alerts::evaluate(bundle.current, inst.id, config_.thresholds, alert_state_, config_.alert_cooldown);
  }
  for (const auto& ev : events) {
    try {
      alerts::dispatch(*parts_.sink, alerts::render_email(ev, inst, config_.sink.recipients), parts_.sleeper);
      ++report.alerts;
    } catch (const alerts::AlertError& e) {
      report.errors.push_back(std::string("alert: ") + e.what());
    }
  }

  std::optional<std::string> publish_error;
  auto publish = [&](auto&& fn) {
    try {
      fn();
      ++report.published;
    } catch (const mqtt::MqttError& e) {
      if (!publish_error) publish_error = e.what();
    }
  };
  for (auto p : kAllParameters) {
    if (const auto v = bundle.current.get(p)) {
      publish([&] { parts_.gateway->publish_sample(inst.id, p, {bundle.current.timestamp, *v}); });
    }
  }
  for (const auto& set : produced) publish([&] { parts_.gateway->publish_forecast(inst.id, set); });
  if (publish_error) report.errors.push_back("publish: " + *publish_error + " (buffered for redelivery)");
}

// ---------------------------------------------------------------------------
// API

namespace {

HttpResponse json_response(int status, const ordered_json& body) { return {status, body.dump(), "application/json"}; }

HttpResponse api_error(int status, const std::string& message) {
  return json_response(status, ordered_json{{"error", message}});
}

std::optional<double> parse_number(const std::map<std::string, std::string>& q, const char* key) {
  const auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end != it->second.c_str() + it->second.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

ordered_json point_json(const SeriesPoint& p) {
  return ordered_json{{"ts", format_rfc3339(p.timestamp)}, {"value", p.value}};
}

}  // namespace

std::optional<Installation> Service::resolve_for_api(const GeoPoint& p, HttpResponse& error) const {
  try {
    return ingestion::nearest_installation(*parts_.lookup_provider, p, config_.max_distance_km);
  } catch (const ingestion::IngestionError& e) {
    error = api_error(503, std::string("cannot resolve an installation near the requested point: ") + e.what());
  } catch (const std::exception& e) {
    error = api_error(503, e.what());
  }
  return std::nullopt;
}

HttpResponse Service::handle_api_request(const std::string& path, const std::map<std::string, std::string>& query,
                                         Instant now) const {
  if (path.rfind("/api/", 0) != 0) return api_error(404, "not found");

  if (path == "/api/thresholds") {
    ordered_json t = ordered_json::object();
    ordered_json units = ordered_json::object();
    for (const auto& [p, v] : config_.thresholds.entries()) {
      t[std::string(key_of(p))] = v;
      units[std::string(key_of(p))] = std::string(unit_of(p));
    }
    return json_response(200, ordered_json{{"thresholds", t}, {"units", units}});
  }
  if (path == "/api/files") {
    ordered_json files = ordered_json::array();
    std::error_code ec;
    const auto& dir = config_.store.data_dir;
    if (!dir.empty() && std::filesystem::is_directory(dir, ec)) {
      std::vector<std::filesystem::directory_entry> entries;
      for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
        if (e.is_regular_file(ec)) entries.push_back(e);
      }
      std::sort(entries.begin(), entries.end(),
                [](const auto& a, const auto& b) { return a.path().filename() < b.path().filename(); });
      for (const auto& e : entries) {
        const auto ftime = std::filesystem::last_write_time(e, ec);
        const auto sys = std::filesystem::file_time_type::clock::to_sys(ftime);
        files.push_back(ordered_json{{"name", e.path().filename().string()},
                                     {"bytes", e.file_size(ec)},
                                     {"modified", format_rfc3339(std::chrono::floor<std::chrono::seconds>(sys))}});
      }
    }
    return json_response(200, ordered_json{{"files", files}});
  }
  if (path == "/api/health") {
    return json_response(200, ordered_json{{"status", "ok"}, {"points", parts_.store->point_count()}});
  }
  if (path != "/api/current" && path != "/api/history" && path != "/api/forecast") return api_error(404, "not found");

  const auto lat = parse_number(query, "lat");
  const auto lon = parse_number(query, "lon");
  if (!lat || !lon) return api_error(400, "lat and lon must be numbers");
  std::optional<GeoPoint> point;
  try {
    point.emplace(*lat, *lon);
  } catch (const DomainError& e) {
    return api_error(400, e.what());
  }
  HttpResponse failure;
  const auto inst = resolve_for_api(*point, failure);
  if (!inst) return failure;

  ordered_json body;
  body["installation"] = {{"id", inst->id},
                          {"lat", inst->point.latitude()},
                          {"lon", inst->point.longitude()},
                          {"distance_km", haversine_km(*point, inst->point)}};
  const auto keys = parts_.store->keys_for(inst->id);

  if (path == "/api/current") {
    std::optional<Instant> newest;
    std::map<Parameter, SeriesPoint> latest;
    for (const auto& k : keys) {
      if (auto p = parts_.store->latest(k)) {
        latest.emplace(k.parameter, *p);
        if (!newest || p->timestamp > *newest) newest = p->timestamp;
      }
    }
    if (!newest) {
      body["no_data"] = true;
      return json_response(200, body);
    }
    ordered_json values = ordered_json::object();
    std::optional<double> pm25, pm10;
    for (const auto& [p, sp] : latest) {
      if (sp.timestamp != *newest || p == Parameter::Aqi) continue;
      values[std::string(key_of(p))] = sp.value;
      if (p == Parameter::Pm25) pm25 = sp.value;
      if (p == Parameter::Pm10) pm10 = sp.value;
    }
    const auto caqi = compute_caqi(pm25, pm10);
    body["timestamp"] = format_rfc3339(*newest);
    body["values"] = values;
    body["caqi"] = caqi ? ordered_json(*caqi) : ordered_json(nullptr);
    return json_response(200, body);
  }

  if (path == "/api/history") {
    const Instant from = now - std::chrono::hours{24};
    ordered_json series = ordered_json::object();
    for (const auto& k : keys) {
      const auto points = parts_.store->query_range(k, from, now);
      if (points.empty()) continue;
      ordered_json arr = ordered_json::array();
      for (const auto& p : points) arr.push_back(point_json(p));
      series[std::string(key_of(k.parameter))] = arr;
    }
    if (series.empty()) {
      body["no_data"] = true;
      return json_response(200, body);
    }
    body["from"] = format_rfc3339(from);
    body["to"] = format_rfc3339(now);
    body["series"] = series;
    return json_response(200, body);
  }

  ordered_json forecasts = ordered_json::object();
  for (const auto& k : keys) {
    const auto f = forecast_for(k);
    if (!f) continue;
    ordered_json points = ordered_json::array();
    for (std::size_t h = 0; h < f->values.size(); ++h) {
      points.push_back(point_json({f->base_time + std::chrono::hours{h + 1}, f->values[h]}));
    }
    forecasts[std::string(key_of(k.parameter))] = {{"base", format_rfc3339(f->base_time)},
                                                   {"h1", f->values[0]},
                                                   {"h2", f->values[1]},
                                                   {"h3", f->values[2]},
                                                   {"model_id", f->model_id},
                                                   {"points", points}};
  }
  if (forecasts.empty()) {
    body["no_data"] = true;
    return json_response(200, body);
  }
  body["forecasts"] = forecasts;
  return json_response(200, body);
}

}  // namespace aq::service
