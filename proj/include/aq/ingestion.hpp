/**
 * @file ingestion.hpp
 * @brief Client side of the public sensor network: providers, nearest lookup, bundles, caching.
 */
#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aq/domain.hpp"
#include "aq/net/http_client.hpp"

namespace aq::ingestion {

class IngestionError : public std::runtime_error {
 public:
  enum class Kind {
    NoInstallationInRange,
    ProviderUnavailable,
    MalformedResponse,
    RateLimited,
    UnknownInstallation,
    NoMeasurements,
    FixtureNotFound,
    FixtureParseError,
    InvalidArgument,
  };

  IngestionError(Kind kind, std::string message) : std::runtime_error(std::move(message)), kind_(kind) {}

  static IngestionError rate_limited(std::chrono::seconds retry_after) {
    IngestionError e(Kind::RateLimited, "rate limited; retry after " + std::to_string(retry_after.count()) + " s");
    e.retry_after_ = retry_after;
    return e;
  }
  static IngestionError fixture_parse(std::size_t line, const std::string& why) {
    IngestionError e(Kind::FixtureParseError, "fixture line " + std::to_string(line) + ": " + why);
    e.line_number_ = line;
    return e;
  }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] std::chrono::seconds retry_after() const noexcept { return retry_after_; }
  [[nodiscard]] std::size_t line_number() const noexcept { return line_number_; }

 private:
  Kind kind_;
  std::chrono::seconds retry_after_{0};
  std::size_t line_number_ = 0;
};

/// Unvalidated provider response for one installation.
struct RawBundle {
  RawMeasurement current;
  std::vector<RawMeasurement> history;
  std::vector<RawMeasurement> forecast;
};

struct MeasurementBundle {
  Measurement current;
  /// Up to 24 hourly records before current, ascending, one per hour.
  std::vector<Measurement> history;
  std::vector<Measurement> provider_forecast;
  /// Records rejected by validation.
  std::size_t dropped = 0;

  friend bool operator==(const MeasurementBundle&, const MeasurementBundle&) = default;
};

/**
 * @brief Capability shared by the live API adapter and the fixture replay.
 *
 * Implementations must be callable from several threads at once.
 */
class MeasurementProvider {
 public:
  virtual ~MeasurementProvider() = default;

  /// Candidates within max_distance_km of point, in any order.
  virtual std::vector<Installation> installations_near(const GeoPoint& point, double max_distance_km) = 0;
  virtual RawBundle measurements(const Installation& installation) = 0;
};

/// Closest candidate within range, lowest id on distance ties. Order-independent.
Installation select_nearest(std::span<const Installation> candidates, const GeoPoint& point,
                            double max_distance_km);

Installation nearest_installation(MeasurementProvider& provider, const GeoPoint& point, double max_distance_km);

/// Validates every record, dropping (and counting) the ones that fail.
MeasurementBundle assemble_bundle(const RawBundle& raw);

MeasurementBundle fetch_measurements(MeasurementProvider& provider, const Installation& installation);

// ---------------------------------------------------------------------------
// Fixture replay

struct FixtureRecord {
  std::int64_t installation_id = 0;
  GeoPoint point{0.0, 0.0};
  Instant timestamp{};
  std::map<Parameter, double> values;
};

/// One JSON Lines record:
/// {"installation_id": int, "lat": float, "lon": float, "ts": RFC3339, "values": {...}}
FixtureRecord parse_fixture_line(const std::string& line);

/**
 * @brief Provider whose answers are a pure function of a fixture and a cursor time.
 *
 * Bundles are windows over the fixture ending at the newest record at or before
 * the cursor. Without a clock the cursor sits at the end of the fixture.
 */
class ReplayProvider final : public MeasurementProvider {
 public:
  explicit ReplayProvider(std::vector<FixtureRecord> records);

  void follow_clock(Clock clock);

  std::vector<Installation> installations_near(const GeoPoint& point, double max_distance_km) override;
  RawBundle measurements(const Installation& installation) override;

  [[nodiscard]] std::vector<Installation> installations() const;
  /// Distinct record timestamps, ascending.
  [[nodiscard]] std::vector<Instant> timestamps() const;

 private:
  std::map<std::int64_t, Installation> installations_;
  std::map<std::int64_t, std::map<Instant, RawMeasurement>> records_;
  mutable std::mutex mutex_;
  Clock clock_;
};

std::shared_ptr<ReplayProvider> load_replay_provider(const std::filesystem::path& fixture_path);

// ---------------------------------------------------------------------------
// Cache decorator

/**
 * @brief TTL cache over another provider with request coalescing.
 *
 * Keys are (request kind, installation id) or (request kind, point rounded to
 * 4 decimals, radius). Only successful responses are cached; concurrent
 * identical requests share one inner call.
 */
class CachingProvider final : public MeasurementProvider {
 public:
  CachingProvider(std::shared_ptr<MeasurementProvider> inner, std::chrono::seconds ttl, Clock clock);

  std::vector<Installation> installations_near(const GeoPoint& point, double max_distance_km) override;
  RawBundle measurements(const Installation& installation) override;

  [[nodiscard]] std::size_t inner_calls() const;

 private:
  template <typename T>
  struct Slot {
    std::map<std::string, std::pair<Instant, T>> entries;
    std::map<std::string, std::shared_future<T>> in_flight;
  };

  template <typename T, typename Fetch>
  T lookup(Slot<T>& slot, const std::string& key, Fetch&& fetch);

  std::shared_ptr<MeasurementProvider> inner_;
  std::chrono::seconds ttl_;
  Clock clock_;
  mutable std::mutex mutex_;
  Slot<std::vector<Installation>> nearest_;
  Slot<RawBundle> bundles_;
  std::size_t inner_calls_ = 0;
};

std::shared_ptr<CachingProvider> with_cache(std::shared_ptr<MeasurementProvider> inner, std::chrono::seconds ttl,
                                            Clock clock = wall_clock());

// ---------------------------------------------------------------------------
// Live API adapter (airly v2 shaped)

struct AirlyOptions {
  std::string base_url = "https://airapi.airly.eu";
  std::string api_key;
  std::string nearest_path = "/v2/installations/nearest";
  std::string measurements_path = "/v2/measurements/installation";
  int max_results = -1;
};

std::vector<Installation> parse_airly_installations(const std::string& body);
RawBundle parse_airly_measurements(const std::string& body);

class AirlyProvider final : public MeasurementProvider {
 public:
  explicit AirlyProvider(AirlyOptions options, net::HttpGet get = net::default_http_get());

  std::vector<Installation> installations_near(const GeoPoint& point, double max_distance_km) override;
  RawBundle measurements(const Installation& installation) override;

 private:
  std::string request(const std::string& url);

  AirlyOptions options_;
  net::HttpGet get_;
};

}  // namespace aq::ingestion
