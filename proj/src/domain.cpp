#include "aq/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

namespace aq {

namespace {

struct ParameterInfo {
  Parameter parameter;
  std::string_view display;
  std::string_view key;
  std::string_view unit;
};

constexpr std::array<ParameterInfo, 7> kInfo{{
    {Parameter::Pm1, "PM1", "pm1", "µg/m³"},
    {Parameter::Pm25, "PM25", "pm25", "µg/m³"},
    {Parameter::Pm10, "PM10", "pm10", "µg/m³"},
    {Parameter::Temperature, "TEMPERATURE", "temperature", "°C"},
    {Parameter::Pressure, "PRESSURE", "pressure", "hPa"},
    {Parameter::Humidity, "HUMIDITY", "humidity", "%"},
    {Parameter::Aqi, "AQI", "aqi", "CAQI"},
}};

const ParameterInfo& info(Parameter p) { return kInfo[static_cast<std::size_t>(p)]; }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::string describe(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void check_range(Parameter p, double v) {
  bool ok = std::isfinite(v);
  switch (p) {
    case Parameter::Pm1:
    case Parameter::Pm25:
    case Parameter::Pm10:
      ok = ok && v >= 0.0;
      break;
    case Parameter::Temperature:
      ok = ok && v >= -90.0 && v <= 60.0;
      break;
    case Parameter::Pressure:
      ok = ok && v >= 800.0 && v <= 1100.0;
      break;
    case Parameter::Humidity:
      ok = ok && v >= 0.0 && v <= 100.0;
      break;
    case Parameter::Aqi:
      ok = ok && v >= 0.0;
      break;
  }
  if (!ok) {
    throw DomainError(DomainError::Kind::OutOfPhysicalRange,
                      std::string("value out of physical range for ") + std::string(info(p).display) +
                          ": " + describe(v),
                      p, v);
  }
}

void check_segments(const std::vector<CaqiSegment>& segs, std::string_view name) {
  auto fail = [&](const std::string& why) {
    throw DomainError(DomainError::Kind::InvalidBreakpoints,
                      "invalid CAQI breakpoints for " + std::string(name) + ": " + why);
  };
  if (segs.empty()) fail("no segments");
  if (segs.front().concentration_lo != 0.0 || segs.front().index_lo != 0.0) fail("must start at (0, 0)");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segs[i];
    if (!(s.concentration_hi > s.concentration_lo) || !(s.index_hi > s.index_lo))
      fail("segment " + std::to_string(i) + " not strictly increasing");
    if (i > 0 && (s.concentration_lo != segs[i - 1].concentration_hi || s.index_lo != segs[i - 1].index_hi))
      fail("segment " + std::to_string(i) + " not contiguous");
  }
}

}  // namespace

std::string_view display_name(Parameter p) { return info(p).display; }
std::string_view key_of(Parameter p) { return info(p).key; }
std::string_view unit_of(Parameter p) { return info(p).unit; }

std::optional<Parameter> parameter_from_key(std::string_view key) {
  for (const auto& i : kInfo) {
    if (iequals(key, i.key) || iequals(key, i.display)) return i.parameter;
  }
  if (iequals(key, "pm2.5") || iequals(key, "pm2_5")) return Parameter::Pm25;
  return std::nullopt;
}

GeoPoint::GeoPoint(double latitude, double longitude) : latitude_(latitude), longitude_(longitude) {
  if (!(latitude >= -90.0 && latitude <= 90.0) || !(longitude >= -180.0 && longitude <= 180.0)) {
    throw DomainError(DomainError::Kind::InvalidCoordinates,
                      "coordinates out of range: (" + describe(latitude) + ", " + describe(longitude) + ")");
  }
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double phi1 = a.latitude() * deg;
  const double phi2 = b.latitude() * deg;
  const double dphi = phi2 - phi1;
  const double dlambda = (b.longitude() - a.longitude()) * deg;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = std::clamp(s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

std::optional<double> Measurement::get(Parameter p) const {
  switch (p) {
    case Parameter::Pm1: return pm1;
    case Parameter::Pm25: return pm25;
    case Parameter::Pm10: return pm10;
    case Parameter::Temperature: return temperature;
    case Parameter::Pressure: return pressure;
    case Parameter::Humidity: return humidity;
    case Parameter::Aqi: return aqi;
  }
  return std::nullopt;
}

void Measurement::set(Parameter p, std::optional<double> v) {
  switch (p) {
    case Parameter::Pm1: pm1 = v; break;
    case Parameter::Pm25: pm25 = v; break;
    case Parameter::Pm10: pm10 = v; break;
    case Parameter::Temperature: temperature = v; break;
    case Parameter::Pressure: pressure = v; break;
    case Parameter::Humidity: humidity = v; break;
    case Parameter::Aqi: aqi = v; break;
  }
}

RawMeasurement to_raw(const Measurement& m) {
  RawMeasurement raw;
  raw.timestamp = m.timestamp;
  for (Parameter p : kAllParameters) {
    if (auto v = m.get(p)) raw.values[p] = *v;
  }
  return raw;
}

CaqiTable::CaqiTable(std::vector<CaqiSegment> pm25, std::vector<CaqiSegment> pm10)
    : pm25_(std::move(pm25)), pm10_(std::move(pm10)) {
  check_segments(pm25_, "PM25");
  check_segments(pm10_, "PM10");
}

const CaqiTable& CaqiTable::standard() {
  static const CaqiTable table{
      {{0, 15, 0, 25}, {15, 30, 25, 50}, {30, 55, 50, 75}, {55, 110, 75, 100}},
      {{0, 25, 0, 25}, {25, 50, 25, 50}, {50, 90, 50, 75}, {90, 180, 75, 100}},
  };
  return table;
}

const std::vector<CaqiSegment>& CaqiTable::segments(Parameter pollutant) const {
  if (pollutant == Parameter::Pm25) return pm25_;
  if (pollutant == Parameter::Pm10) return pm10_;
  throw std::invalid_argument("CAQI sub-index defined only for PM25 and PM10");
}

double CaqiTable::sub_index(Parameter pollutant, double concentration) const {
  if (std::isnan(concentration) || concentration < 0.0) {
    throw DomainError(DomainError::Kind::NegativeConcentration,
                      "negative concentration for " + std::string(display_name(pollutant)), pollutant,
                      concentration);
  }
  const auto& segs = segments(pollutant);
  auto it = std::find_if(segs.begin(), segs.end(),
                         [&](const CaqiSegment& s) { return concentration <= s.concentration_hi; });
  const CaqiSegment& s = it == segs.end() ? segs.back() : *it;
  const double slope = (s.index_hi - s.index_lo) / (s.concentration_hi - s.concentration_lo);
  return s.index_lo + (concentration - s.concentration_lo) * slope;
}

std::optional<double> compute_caqi(std::optional<double> pm25, std::optional<double> pm10,
                                   const CaqiTable& table) {
  std::optional<double> result;
  if (pm25) result = table.sub_index(Parameter::Pm25, *pm25);
  if (pm10) {
    const double sub = table.sub_index(Parameter::Pm10, *pm10);
    result = result ? std::max(*result, sub) : sub;
  }
  return result;
}

Measurement validate_measurement(const RawMeasurement& raw, const CaqiTable& table) {
  if (!raw.timestamp) throw DomainError(DomainError::Kind::MissingTimestamp, "measurement has no timestamp");
  Measurement m;
  m.timestamp = *raw.timestamp;
  bool any = false;
  for (const auto& [p, v] : raw.values) {
    if (p == Parameter::Aqi) continue;
    check_range(p, v);
    m.set(p, v);
    any = true;
  }
  if (!any) throw DomainError(DomainError::Kind::AllFieldsAbsent, "measurement carries no parameter values");
  m.aqi = compute_caqi(m.pm25, m.pm10, table);
  return m;
}

}  // namespace aq
