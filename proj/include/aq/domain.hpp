/**
 * @file domain.hpp
 * @brief Shared vocabulary: parameters, measurements, locations, CAQI and distance math.
 */
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aq/time.hpp"

namespace aq {

enum class Parameter : std::uint8_t { Pm1, Pm25, Pm10, Temperature, Pressure, Humidity, Aqi };

inline constexpr std::array<Parameter, 7> kAllParameters{
    Parameter::Pm1,      Parameter::Pm25,     Parameter::Pm10, Parameter::Temperature,
    Parameter::Pressure, Parameter::Humidity, Parameter::Aqi};

/// Display name, e.g. "PM25", "AQI".
std::string_view display_name(Parameter p);
/// Lower-case wire key used in topics, payloads and the JSON API, e.g. "pm25".
std::string_view key_of(Parameter p);
std::string_view unit_of(Parameter p);
/// Case-insensitive; accepts both the wire key and the display name.
std::optional<Parameter> parameter_from_key(std::string_view key);

/**
 * @brief Error raised by domain construction and validation.
 */
class DomainError : public std::runtime_error {
 public:
  enum class Kind {
    InvalidCoordinates,
    MissingTimestamp,
    AllFieldsAbsent,
    OutOfPhysicalRange,
    NegativeConcentration,
    InvalidBreakpoints,
  };

  DomainError(Kind kind, std::string message, std::optional<Parameter> parameter = std::nullopt,
              std::optional<double> value = std::nullopt)
      : std::runtime_error(std::move(message)), kind_(kind), parameter_(parameter), value_(value) {}

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] std::optional<Parameter> parameter() const noexcept { return parameter_; }
  [[nodiscard]] std::optional<double> value() const noexcept { return value_; }

 private:
  Kind kind_;
  std::optional<Parameter> parameter_;
  std::optional<double> value_;
};

/**
 * @brief Validated WGS84 coordinate pair in degrees.
 */
class GeoPoint {
 public:
  /// Throws DomainError(InvalidCoordinates) outside [-90, 90] x [-180, 180] or on NaN.
  GeoPoint(double latitude, double longitude);

  [[nodiscard]] double latitude() const noexcept { return latitude_; }
  [[nodiscard]] double longitude() const noexcept { return longitude_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double latitude_;
  double longitude_;
};

/// Great-circle distance on a sphere of radius 6371.0 km.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

inline constexpr double kEarthRadiusKm = 6371.0;

struct Installation {
  std::int64_t id = 0;
  GeoPoint point{0.0, 0.0};
  std::optional<double> elevation_m;
  std::string provider_name;

  friend bool operator==(const Installation&, const Installation&) = default;
};

/**
 * @brief One timestamped sensor sample. Every field is optional; aqi is derived.
 */
struct Measurement {
  Instant timestamp{};
  std::optional<double> pm1;
  std::optional<double> pm25;
  std::optional<double> pm10;
  std::optional<double> temperature;
  std::optional<double> pressure;
  std::optional<double> humidity;
  std::optional<double> aqi;

  [[nodiscard]] std::optional<double> get(Parameter p) const;
  void set(Parameter p, std::optional<double> v);

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

/// Unvalidated candidate record as it arrives from a provider or fixture.
struct RawMeasurement {
  std::optional<Instant> timestamp;
  std::map<Parameter, double> values;
};

RawMeasurement to_raw(const Measurement& m);

// ---------------------------------------------------------------------------
// CAQI

struct CaqiSegment {
  double concentration_lo;
  double concentration_hi;
  double index_lo;
  double index_hi;
};

/**
 * @brief Piecewise-linear breakpoint table for the PM2.5 and PM10 sub-indices.
 *
 * Segments must be contiguous, strictly increasing in both concentration and
 * index, and start at (0, 0). Concentrations above the last breakpoint
 * extrapolate the final segment's slope so extreme values stay ordered.
 */
class CaqiTable {
 public:
  CaqiTable(std::vector<CaqiSegment> pm25, std::vector<CaqiSegment> pm10);

  /// PM2.5: 0-15-30-55-110, PM10: 0-25-50-90-180, mapped onto 0-25-50-75-100.
  static const CaqiTable& standard();

  /// Throws DomainError(NegativeConcentration) for negative input.
  [[nodiscard]] double sub_index(Parameter pollutant, double concentration) const;

  [[nodiscard]] const std::vector<CaqiSegment>& segments(Parameter pollutant) const;

 private:
  std::vector<CaqiSegment> pm25_;
  std::vector<CaqiSegment> pm10_;
};

/// Maximum of the present sub-indices; absent when both inputs are absent.
std::optional<double> compute_caqi(std::optional<double> pm25, std::optional<double> pm10,
                                   const CaqiTable& table = CaqiTable::standard());

/// Validates ranges and recomputes aqi; an aqi value present in raw is ignored.
Measurement validate_measurement(const RawMeasurement& raw,
                                 const CaqiTable& table = CaqiTable::standard());

}  // namespace aq
