// aq: operator entry point. Exit codes: 0 ok, 1 usage, 2 runtime failure.
#include <csignal>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "aq/service.hpp"
#include "json.hpp"

using namespace aq;
using nlohmann::ordered_json;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct Args {
  std::string config;
  std::string fixture;
  std::string parameter = "pm25";
  std::size_t window = 24;
  std::size_t horizon = 1;
  std::int64_t installation = -1;
  std::string output;
  std::string alerts_out;
  bool serve = false;
  std::string base_url;
  std::string endpoint;
  std::optional<double> lat;
  std::optional<double> lon;
  double value = 0.0;
};

Parameter parse_parameter(const std::string& key) {
  const auto p = parameter_from_key(key);
  if (!p) throw CLI::ValidationError("parameter", "unknown parameter '" + key + "'");
  return *p;
}

/// Blocks SIGINT/SIGTERM in every thread and waits for one in the caller.
void wait_for_signal(sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
}

int cmd_serve(const Args& a) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const auto config = service::load_config(a.config);
  auto rt = service::build_runtime(config);
  if (rt.broker_server) std::cerr << "mqtt broker listening on port " << rt.broker_server->port() << "\n";
  if (rt.edge) std::cerr << "edge node listening on port " << rt.edge->start_http() << "\n";
  service::ApiServer api(*rt.service, config.api, wall_clock());
  std::cerr << "api listening on port " << api.start() << "\n";
  service::Scheduler scheduler(*rt.service, config.poll_interval);
  scheduler.start();

  wait_for_signal(set);
  std::cerr << "shutting down\n";
  scheduler.stop();
  api.stop();
  if (rt.edge) rt.edge->stop();
  rt.service->gateway().flush();
  if (!config.store.data_dir.empty()) rt.service->store().save_snapshot(config.store.data_dir / "store.snapshot");
  if (rt.broker_server) rt.broker_server->stop();
  return 0;
}

int cmd_train(const Args& a) {
  const auto parameter = parse_parameter(a.parameter);
  std::ifstream in(a.fixture);
  if (!std::filesystem::is_regular_file(a.fixture) || !in.is_open()) {
    throw std::runtime_error("cannot read fixture " + a.fixture);
  }
  std::map<std::int64_t, std::vector<std::pair<Instant, double>>> samples;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ingestion::FixtureRecord r;
    try {
      r = ingestion::parse_fixture_line(line);
    } catch (const ingestion::IngestionError& e) {
      throw ingestion::IngestionError::fixture_parse(n, e.what());
    }
    if (const auto it = r.values.find(parameter); it != r.values.end()) {
      samples[r.installation_id].emplace_back(r.timestamp, it->second);
    }
  }
  if (samples.empty()) throw std::runtime_error("fixture has no " + a.parameter + " values");
  const std::int64_t id = a.installation >= 0 ? a.installation : samples.begin()->first;
  const auto found = samples.find(id);
  if (found == samples.end()) throw std::runtime_error("installation " + std::to_string(id) + " not in fixture");

  const auto series = hourly_aggregate(found->second);
  forecast::ForecastParams params;
  params.window = a.window;
  const auto rows = forecast::build_supervised(series, a.window, a.horizon);
  const auto model = forecast::train_model(rows, params);

  std::ofstream out(a.output);
  if (!out) throw std::runtime_error("cannot write model " + a.output);
  out << model.tree.to_json().dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write model " + a.output);

  ordered_json report;
  report["installation_id"] = id;
  report["parameter"] = a.parameter;
  report["window"] = a.window;
  report["horizon"] = a.horizon;
  report["points"] = series.size();
  report["train_rows"] = model.train_rows;
  report["validation_rows"] = model.validation_rows;
  report["validation_mae"] = model.validation_mae ? ordered_json(*model.validation_mae) : ordered_json(nullptr);
  report["leaves"] = model.tree.leaf_count();
  report["model"] = a.output;
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_replay(const Args& a) {
  auto config = a.config.empty()
                    ? service::parse_config(R"({"locations": [{"lat": 0, "lon": 0}]})", std::filesystem::current_path())
                    : service::load_config(a.config);
  if (a.config.empty()) {
    // no config: monitor every installation in the fixture
    config.locations.clear();
    for (const auto& inst : ingestion::load_replay_provider(a.fixture)->installations()) {
      config.locations.push_back(inst.point);
    }
  }
  service::ReplayOptions opts;
  if (!a.alerts_out.empty()) opts.alerts_file = a.alerts_out;
  auto result = service::run_replay(config, a.fixture, opts);
  if (!config.store.data_dir.empty()) {
    std::filesystem::create_directories(config.store.data_dir);
    result.runtime.service->store().save_snapshot(config.store.data_dir / "store.snapshot");
  }
  std::cout << service::to_json(result.report) << std::endl;

  if (a.serve) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    const auto now = result.now;
    service::ApiServer api(*result.runtime.service, config.api, [now] { return now; });
    std::cerr << "api listening on port " << api.start() << " (now pinned to " << format_rfc3339(now) << ")\n";
    if (result.runtime.edge) std::cerr << "edge node listening on port " << result.runtime.edge->start_http() << "\n";
    wait_for_signal(set);
    api.stop();
  }
  return 0;
}

int cmd_query(const Args& a) {
  std::string url = a.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  url += a.endpoint.rfind('/', 0) == 0 ? a.endpoint : "/api/" + a.endpoint;
  std::vector<std::string> params;
  char buf[64];
  if (a.lat) {
    std::snprintf(buf, sizeof buf, "lat=%.6f", *a.lat);
    params.emplace_back(buf);
  }
  if (a.lon) {
    std::snprintf(buf, sizeof buf, "lon=%.6f", *a.lon);
    params.emplace_back(buf);
  }
  for (std::size_t i = 0; i < params.size(); ++i) url += (i == 0 ? "?" : "&") + params[i];
  const auto r = net::http_get(url);
  std::cout << r.body << std::endl;
  if (r.status < 200 || r.status >= 300) {
    std::cerr << "HTTP " << r.status << " from " << url << "\n";
    return kRuntime;
  }
  return 0;
}

int cmd_alert_test(const Args& a) {
  const auto parameter = parse_parameter(a.parameter);
  const auto config = service::load_config(a.config);
  const auto sink = alerts::make_sink(config.sink);
  alerts::AlertEvent event;
  event.parameter = parameter;
  event.observed = a.value;
  event.threshold = config.thresholds.get(parameter).value_or(a.value);
  event.timestamp = floor_hour(wall_clock_now());
  Installation inst;
  inst.point = config.locations.front();
  const auto msg = alerts::render_email(event, inst, config.sink.recipients);
  ordered_json out;
  out["sink"] = sink->kind();
  out["subject"] = msg.subject;
  try {
    const auto receipt = alerts::dispatch(*sink, msg);
    out["attempts"] = receipt.attempts;
    out["delivered"] = true;
    std::cout << out.dump(2) << std::endl;
    return 0;
  } catch (const alerts::AlertError& e) {
    out["attempts"] = e.attempts();
    out["delivered"] = false;
    out["error"] = e.what();
    std::cout << out.dump(2) << std::endl;
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Air-quality monitoring service: ingest, store, forecast, alert, publish.", "aq"};
  app.require_subcommand(1, 1);
  Args a;

  auto* serve = app.add_subcommand("serve", "Run the scheduler, REST API, gateway and optional edge node");
  serve->add_option("--config", a.config, "Configuration file")->required()->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Fit and prune one horizon model from a fixture; prints validation MAE");
  train->add_option("fixture", a.fixture, "JSON Lines fixture")->required()->check(CLI::ExistingFile);
  train->add_option("--parameter,-p", a.parameter, "Parameter key (pm25, pm10, ...)")->capture_default_str();
  train->add_option("--window,-w", a.window, "Lag window in hours")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--horizon", a.horizon, "Hours ahead")->capture_default_str()->check(CLI::Range(1, 3));
  train->add_option("--installation", a.installation, "Installation id (default: lowest in fixture)");
  train->add_option("--output,-o", a.output, "Model JSON output path")->required();

  auto* replay = app.add_subcommand("replay", "Replay a fixture through the full pipeline; prints the PollReport");
  replay->add_option("fixture", a.fixture, "JSON Lines fixture")->required()->check(CLI::ExistingFile);
  replay->add_option("config,--config", a.config, "Configuration file")->check(CLI::ExistingFile);
  replay->add_option("--alerts-out", a.alerts_out, "Alert file sink path (truncated first)");
  replay->add_flag("--serve", a.serve, "Keep serving the API afterwards with now pinned to the fixture end");

  auto* query = app.add_subcommand("query", "GET an endpoint of a running instance and print the body");
  query->add_option("base_url", a.base_url, "e.g. http://localhost:8080")->required();
  query->add_option("endpoint", a.endpoint, "current | history | forecast | thresholds | files | /path")->required();
  query->add_option("--lat", a.lat, "Latitude");
  query->add_option("--lon", a.lon, "Longitude");

  auto* alert = app.add_subcommand("alert-test", "Send a synthetic alert through the configured sink");
  alert->add_option("--config", a.config, "Configuration file")->required()->check(CLI::ExistingFile);
  alert->add_option("parameter", a.parameter, "Parameter key")->required();
  alert->add_option("value", a.value, "Observed value")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*serve) return cmd_serve(a);
    if (*train) return cmd_train(a);
    if (*replay) return cmd_replay(a);
    if (*query) return cmd_query(a);
    if (*alert) return cmd_alert_test(a);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
