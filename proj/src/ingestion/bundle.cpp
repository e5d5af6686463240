#include <algorithm>
#include <limits>

#include "aq/ingestion.hpp"
#include "aq/time.hpp"

namespace aq::ingestion {

Installation select_nearest(std::span<const Installation> candidates, const GeoPoint& point,
                            double max_distance_km) {
  if (!(max_distance_km > 0.0)) {
    throw IngestionError(IngestionError::Kind::InvalidArgument, "max_distance_km must be positive");
  }
  const Installation* best = nullptr;
  double best_km = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    const double d = haversine_km(point, c.point);
    if (d > max_distance_km) continue;
    if (!best || d < best_km || (d == best_km && c.id < best->id)) {
      best = &c;
      best_km = d;
    }
  }
  if (!best) {
    throw IngestionError(IngestionError::Kind::NoInstallationInRange,
                         "no installation within " + std::to_string(max_distance_km) + " km");
  }
  return *best;
}

Installation nearest_installation(MeasurementProvider& provider, const GeoPoint& point, double max_distance_km) {
  if (!(max_distance_km > 0.0)) {
    throw IngestionError(IngestionError::Kind::InvalidArgument, "max_distance_km must be positive");
  }
  const auto candidates = provider.installations_near(point, max_distance_km);
  return select_nearest(candidates, point, max_distance_km);
}

namespace {

std::optional<Measurement> try_validate(const RawMeasurement& raw) {
  try {
    auto m = validate_measurement(raw);
    m.timestamp = floor_hour(m.timestamp);
    return m;
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

// Ascending, one record per hour; the later record in input order wins.
std::vector<Measurement> hourly(std::vector<Measurement> in) {
  std::stable_sort(in.begin(), in.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  std::vector<Measurement> out;
  for (auto& m : in) {
    if (!out.empty() && out.back().timestamp == m.timestamp) {
      out.back() = std::move(m);
    } else {
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace

MeasurementBundle assemble_bundle(const RawBundle& raw) {
  MeasurementBundle bundle;
  std::vector<Measurement> history;
  for (const auto& r : raw.history) {
    if (auto m = try_validate(r)) {
      history.push_back(std::move(*m));
    } else {
      ++bundle.dropped;
    }
  }
  history = hourly(std::move(history));

  auto current = try_validate(raw.current);
  if (!current) {
    ++bundle.dropped;
    if (history.empty()) {
      throw IngestionError(IngestionError::Kind::MalformedResponse, "bundle contains no valid record");
    }
    current = history.back();
    history.pop_back();
  }
  bundle.current = *current;

  std::erase_if(history, [&](const Measurement& m) { return m.timestamp >= bundle.current.timestamp; });
  if (history.size() > 24) history.erase(history.begin(), history.end() - 24);
  bundle.history = std::move(history);

  std::vector<Measurement> forecast;
  for (const auto& r : raw.forecast) {
    if (auto m = try_validate(r)) {
      forecast.push_back(std::move(*m));
    } else {
      ++bundle.dropped;
    }
  }
  bundle.provider_forecast = hourly(std::move(forecast));
  return bundle;
}

MeasurementBundle fetch_measurements(MeasurementProvider& provider, const Installation& installation) {
  return assemble_bundle(provider.measurements(installation));
}

}  // namespace aq::ingestion
