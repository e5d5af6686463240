#include <atomic>
#include <fstream>

#include "aq/mqtt/connection.hpp"
#include "aq/service.hpp"

namespace aq::service {

namespace {

std::shared_ptr<ingestion::MeasurementProvider> base_provider(const ServiceConfig& config, Runtime& rt) {
  if (config.provider.kind == "replay") {
    rt.replay = ingestion::load_replay_provider(config.provider.fixture);
    return rt.replay;
  }
  if (config.provider.kind == "airly") return std::make_shared<ingestion::AirlyProvider>(config.provider.airly);
  throw ConfigError("unknown provider kind '" + config.provider.kind + "'");
}

std::shared_ptr<mqtt::BrokerConnection> connection_for(const ServiceConfig& config, Runtime& rt,
                                                       const std::string& suffix) {
  if (config.broker.kind == "embedded") return std::make_shared<mqtt::InProcessConnection>(rt.broker);
  auto opts = config.broker.mqtt;
  opts.client_id += suffix;
  return std::make_shared<mqtt::MqttTcpConnection>(opts);
}

}  // namespace

Runtime build_runtime(const ServiceConfig& config, const RuntimeOptions& options) {
  Runtime rt;
  if (config.broker.kind == "embedded") {
    rt.broker = std::make_shared<mqtt::InProcessBroker>();
    if (config.broker.listen_port) {
      rt.broker_server = std::make_unique<mqtt::BrokerTcpServer>(rt.broker);
      rt.broker_server->start(config.broker.listen_address, *config.broker.listen_port);
    }
  } else if (config.broker.kind != "mqtt") {
    throw ConfigError("unknown broker kind '" + config.broker.kind + "'");
  }

  ServiceParts parts;
  parts.lookup_provider = base_provider(config, rt);
  parts.provider = ingestion::with_cache(parts.lookup_provider, config.provider.cache_ttl, options.clock);

  StoreOptions so;
  so.retention = config.store.retention;
  so.max_points = config.store.max_points;
  parts.store = std::make_shared<SeriesStore>(so);
  if (options.durable_store && !config.store.data_dir.empty()) {
    std::filesystem::create_directories(config.store.data_dir);
    const auto snapshot = config.store.data_dir / "store.snapshot";
    if (std::filesystem::exists(snapshot)) parts.store->load_snapshot(snapshot);
    parts.store->attach_journal(config.store.data_dir / "store.journal");
  }

  gateway::GatewayOptions go;
  go.buffer_capacity = config.broker.buffer_capacity;
  go.publish_timeout = config.broker.publish_timeout;
  parts.gateway = std::make_shared<gateway::Gateway>(connection_for(config, rt, ""), go);

  auto sink_config = config.sink;
  if (options.alerts_file) {
    sink_config.kind = "file";
    sink_config.path = *options.alerts_file;
  }
  parts.sink = alerts::make_sink(sink_config);
  parts.sleeper = options.sleeper;

  if (config.edge.enabled) {
    rt.edge = std::make_unique<edge::EdgeNode>(connection_for(config, rt, "-edge"), config.edge.options,
                                               options.clock);
    rt.edge->subscribe();
  }
  rt.service = std::make_unique<Service>(config, std::move(parts));
  return rt;
}

std::filesystem::path replay_alerts_path(const ServiceConfig& config) {
  if (config.sink.kind == "file" && !config.sink.path.empty()) return config.sink.path;
  return "alerts.jsonl";
}

ReplayResult run_replay(ServiceConfig config, const std::filesystem::path& fixture, const ReplayOptions& options) {
  config.provider.kind = "replay";
  config.provider.fixture = fixture;
  const auto alerts_path = options.alerts_file.value_or(replay_alerts_path(config));
  if (alerts_path.has_parent_path()) std::filesystem::create_directories(alerts_path.parent_path());
  // reruns must produce the same file, so start empty
  std::ofstream(alerts_path, std::ios::trunc);

  auto cursor = std::make_shared<std::atomic<Instant::rep>>(0);
  Clock clock = [cursor] { return Instant{Instant::duration{cursor->load()}}; };

  RuntimeOptions ro;
  ro.alerts_file = alerts_path;
  ro.clock = clock;
  ro.durable_store = false;
  // simulated time: retries do not wait
  ro.sleeper = [](std::chrono::seconds) {};

  ReplayResult result;
  result.runtime = build_runtime(config, ro);
  result.runtime.replay->follow_clock(clock);
  const auto stamps = result.runtime.replay->timestamps();
  if (stamps.empty()) throw ingestion::IngestionError(ingestion::IngestionError::Kind::NoMeasurements, "fixture is empty");
  for (const auto t : stamps) {
    cursor->store(t.time_since_epoch().count());
    result.report.merge(result.runtime.service->scheduler_tick(t));
  }
  result.now = stamps.back();
  return result;
}

}  // namespace aq::service
