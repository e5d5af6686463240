/**
 * @file service.hpp
 * @brief Service wiring: configuration, the polling tick, the REST API and the replay driver.
 */
#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aq/alerts.hpp"
#include "aq/edge.hpp"
#include "aq/forecast/forecaster.hpp"
#include "aq/gateway.hpp"
#include "aq/ingestion.hpp"
#include "aq/mqtt/broker.hpp"
#include "aq/store.hpp"

namespace aq::service {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProviderConfig {
  std::string kind = "replay";  // replay | airly
  std::filesystem::path fixture;
  ingestion::AirlyOptions airly;
  std::chrono::seconds cache_ttl{600};
};

struct BrokerConfig {
  /// embedded: in-process broker (optionally exposed on listen_port); mqtt: external broker.
  std::string kind = "embedded";
  std::optional<int> listen_port;
  std::string listen_address = "127.0.0.1";
  mqtt::MqttOptions mqtt;
  std::size_t buffer_capacity = 1000;
  std::chrono::milliseconds publish_timeout{5000};
};

struct StoreConfig {
  /// Snapshot and journal live here; also the directory listed by /api/files. Empty = memory only.
  std::filesystem::path data_dir;
  std::chrono::hours retention{24 * 30};
  std::size_t max_points = 5'000'000;
};

struct ForecastConfig {
  forecast::ForecastParams params;
  /// Hours of stored history handed to the learner.
  std::chrono::hours history{24 * 14};
};

struct ApiConfig {
  std::string bind_address = "0.0.0.0";
  int port = 8080;
  std::string cors_origin = "*";
  /// Optional directory served at / (the dashboard build).
  std::filesystem::path static_dir;
};

struct EdgeConfig {
  bool enabled = false;
  edge::EdgeOptions options;
};

struct ServiceConfig {
  std::vector<GeoPoint> locations;
  std::chrono::seconds poll_interval{3600};
  double max_distance_km = 50.0;
  ProviderConfig provider;
  BrokerConfig broker;
  alerts::ThresholdTable thresholds = alerts::ThresholdTable::defaults();
  std::chrono::seconds alert_cooldown = alerts::kDefaultCooldown;
  alerts::SinkConfig sink;
  StoreConfig store;
  ForecastConfig forecast;
  ApiConfig api;
  EdgeConfig edge;
};

/// Parses JSON text; relative paths resolve against base_dir. Throws ConfigError.
ServiceConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);
/// Reads the file, then applies the AIRLY_API_KEY environment override.
ServiceConfig load_config(const std::filesystem::path& path);

struct LocationReport {
  GeoPoint location{0.0, 0.0};
  std::optional<std::int64_t> installation_id;
  std::size_t records_ingested = 0;
  std::size_t records_dropped = 0;
  std::size_t points_appended = 0;
  std::size_t forecasts = 0;
  std::size_t forecasts_skipped = 0;
  std::size_t alerts = 0;
  std::size_t published = 0;
  std::vector<std::string> errors;
};

struct PollReport {
  Instant cycle_start{};
  Instant cycle_end{};
  std::size_t ticks = 0;
  std::vector<LocationReport> locations;

  [[nodiscard]] std::size_t error_count() const;
  /// Folds a later tick into this report (counts add, errors append, window widens).
  void merge(const PollReport& later);
};

std::string to_json(const PollReport& report);

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Everything a Service drives. Tests assemble these by hand; build_parts() does it from config.
struct ServiceParts {
  std::shared_ptr<ingestion::MeasurementProvider> provider;
  /// Uncached provider for API lookups so reads never touch the tick cache. Defaults to provider.
  std::shared_ptr<ingestion::MeasurementProvider> lookup_provider;
  std::shared_ptr<SeriesStore> store;
  std::shared_ptr<gateway::Gateway> gateway;
  std::shared_ptr<alerts::NotificationSink> sink;
  alerts::Sleeper sleeper = alerts::real_sleeper();
};

class Service {
 public:
  Service(ServiceConfig config, ServiceParts parts);

  /// One poll cycle over every configured location. Never throws for per-location failures.
  PollReport scheduler_tick(Instant now);

  /// GET handler for /api/*. `now` bounds the history window.
  HttpResponse handle_api_request(const std::string& path, const std::map<std::string, std::string>& query,
                                  Instant now) const;

  [[nodiscard]] const ServiceConfig& config() const noexcept { return config_; }
  [[nodiscard]] SeriesStore& store() { return *parts_.store; }
  [[nodiscard]] const SeriesStore& store() const { return *parts_.store; }
  [[nodiscard]] gateway::Gateway& gateway() { return *parts_.gateway; }
  [[nodiscard]] std::optional<forecast::ForecastSet> forecast_for(const SeriesKey& key) const;
  [[nodiscard]] alerts::AlertState alert_state() const;

 private:
  void process(std::size_t index, Instant now, LocationReport& report);
  void run_forecasts(const Installation& inst, Instant at, LocationReport& report,
                     std::vector<forecast::ForecastSet>& produced);
  std::optional<Installation> resolve_for_api(const GeoPoint& p, HttpResponse& error) const;

  ServiceConfig config_;
  ServiceParts parts_;
  mutable std::shared_mutex mutex_;  // guards forecasts_ and alert_state_
  std::map<SeriesKey, forecast::ForecastSet> forecasts_;
  alerts::AlertState alert_state_;
  std::mutex tick_mutex_;
};

/// Process-level resources built from config: broker, connections, provider, sink, store.
struct Runtime {
  std::shared_ptr<mqtt::InProcessBroker> broker;
  std::unique_ptr<mqtt::BrokerTcpServer> broker_server;
  std::shared_ptr<ingestion::ReplayProvider> replay;
  std::unique_ptr<edge::EdgeNode> edge;
  std::unique_ptr<Service> service;
};

struct RuntimeOptions {
  /// Replaces the configured sink with a file sink at this path.
  std::optional<std::filesystem::path> alerts_file;
  /// Clock for cache expiry; replay passes its virtual clock.
  Clock clock = wall_clock();
  /// Attach the on-disk journal (serve) or keep the store in memory (replay).
  bool durable_store = true;
  alerts::Sleeper sleeper = alerts::real_sleeper();
};

Runtime build_runtime(const ServiceConfig& config, const RuntimeOptions& options = {});

// ---------------------------------------------------------------------------
// Replay

struct ReplayOptions {
  std::optional<std::filesystem::path> alerts_file;
};

struct ReplayResult {
  Runtime runtime;
  PollReport report;
  /// The pinned "now": the fixture's last timestamp.
  Instant now{};
};

/// Ticks once per distinct fixture hour on a virtual clock and aggregates the reports.
ReplayResult run_replay(ServiceConfig config, const std::filesystem::path& fixture, const ReplayOptions& options = {});

/// Default file-sink path used by replay when the config has no file sink.
std::filesystem::path replay_alerts_path(const ServiceConfig& config);

// ---------------------------------------------------------------------------
// HTTP front

class ApiServer {
 public:
  /// `clock` supplies "now" per request (replay pins it).
  ApiServer(const Service& service, ApiConfig config, Clock clock);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and serves in the background; returns the bound port.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs ticks every poll interval until stop is requested.
class Scheduler {
 public:
  Scheduler(Service& service, std::chrono::seconds interval, Clock clock = wall_clock());
  ~Scheduler();

  void start();
  void stop();
  /// Waits until stop() (or the stop flag) is set.
  void wait();

 private:
  void loop();

  Service& service_;
  std::chrono::seconds interval_;
  Clock clock_;
  std::thread thread_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
};

}  // namespace aq::service
