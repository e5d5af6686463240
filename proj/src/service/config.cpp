#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "aq/service.hpp"
#include "json.hpp"

namespace aq::service {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError("unknown key \"" + k + "\" in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

ServiceConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  only_keys(root, "config",
            {"locations", "poll_interval_s", "max_distance_km", "provider", "broker", "thresholds", "alerts", "store",
             "forecast", "api", "edge"});

  ServiceConfig c;
  const auto locs = root.find("locations");
  if (locs == root.end() || !locs->is_array() || locs->empty()) {
    throw ConfigError("config needs at least one entry in \"locations\"");
  }
  for (const auto& l : *locs) {
    only_keys(l, "locations[]", {"lat", "lon", "name"});
    if (!l.contains("lat") || !l.contains("lon") || !l["lat"].is_number() || !l["lon"].is_number()) {
      throw ConfigError("each location needs numeric lat and lon");
    }
    try {
      c.locations.emplace_back(l["lat"].get<double>(), l["lon"].get<double>());
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }

  c.poll_interval = std::chrono::seconds{get_or<long>(root, "poll_interval_s", 3600, "config")};
  if (c.poll_interval < std::chrono::seconds{60}) throw ConfigError("poll_interval_s must be at least 60");
  c.max_distance_km = get_or<double>(root, "max_distance_km", 50.0, "config");
  if (!(c.max_distance_km > 0)) throw ConfigError("max_distance_km must be positive");

  if (const auto p = root.find("provider"); p != root.end()) {
    only_keys(*p, "provider", {"kind", "fixture", "cache_ttl_s", "airly"});
    c.provider.kind = get_or<std::string>(*p, "kind", "replay", "provider");
    c.provider.fixture = resolve(base_dir, get_or<std::string>(*p, "fixture", "", "provider"));
    c.provider.cache_ttl = std::chrono::seconds{get_or<long>(*p, "cache_ttl_s", 600, "provider")};
    if (const auto a = p->find("airly"); a != p->end()) {
      only_keys(*a, "provider.airly", {"base_url", "api_key", "nearest_path", "measurements_path", "max_results"});
      auto& o = c.provider.airly;
      o.base_url = get_or<std::string>(*a, "base_url", o.base_url, "provider.airly");
      o.api_key = get_or<std::string>(*a, "api_key", "", "provider.airly");
      o.nearest_path = get_or<std::string>(*a, "nearest_path", o.nearest_path, "provider.airly");
      o.measurements_path = get_or<std::string>(*a, "measurements_path", o.measurements_path, "provider.airly");
      o.max_results = get_or<int>(*a, "max_results", o.max_results, "provider.airly");
    }
  }
  if (c.provider.kind != "replay" && c.provider.kind != "airly") {
    throw ConfigError("provider.kind must be \"replay\" or \"airly\"");
  }
  if (c.provider.cache_ttl <= std::chrono::seconds::zero()) throw ConfigError("provider.cache_ttl_s must be positive");

  if (const auto b = root.find("broker"); b != root.end()) {
    only_keys(*b, "broker",
              {"kind", "listen_port", "listen_address", "host", "port", "client_id", "username", "password", "tls",
               "tls_verify", "ca_file", "buffer_capacity", "publish_timeout_ms"});
    auto& bc = c.broker;
    bc.kind = get_or<std::string>(*b, "kind", "embedded", "broker");
    if (b->contains("listen_port") && !(*b)["listen_port"].is_null()) {
      bc.listen_port = get_or<int>(*b, "listen_port", 0, "broker");
    }
    bc.listen_address = get_or<std::string>(*b, "listen_address", bc.listen_address, "broker");
    bc.mqtt.host = get_or<std::string>(*b, "host", bc.mqtt.host, "broker");
    bc.mqtt.port = get_or<int>(*b, "port", bc.mqtt.port, "broker");
    bc.mqtt.client_id = get_or<std::string>(*b, "client_id", bc.mqtt.client_id, "broker");
    bc.mqtt.username = get_or<std::string>(*b, "username", "", "broker");
    bc.mqtt.password = get_or<std::string>(*b, "password", "", "broker");
    bc.mqtt.tls = get_or<bool>(*b, "tls", false, "broker");
    bc.mqtt.tls_verify = get_or<bool>(*b, "tls_verify", true, "broker");
    bc.mqtt.ca_file = resolve(base_dir, get_or<std::string>(*b, "ca_file", "", "broker")).string();
    bc.buffer_capacity = get_or<std::size_t>(*b, "buffer_capacity", 1000, "broker");
    bc.publish_timeout = std::chrono::milliseconds{get_or<long>(*b, "publish_timeout_ms", 5000, "broker")};
  }
  if (c.broker.kind != "embedded" && c.broker.kind != "mqtt") {
    throw ConfigError("broker.kind must be \"embedded\" or \"mqtt\"");
  }

  if (const auto t = root.find("thresholds"); t != root.end()) {
    if (!t->is_object()) throw ConfigError("thresholds must be an object");
    for (const auto& [k, v] : t->items()) {
      const auto p = parameter_from_key(k);
      if (!p) throw ConfigError("unknown threshold parameter \"" + k + "\"");
      if (v.is_null()) {
        c.thresholds.unset(*p);
      } else if (v.is_number()) {
        try {
          c.thresholds.set(*p, v.get<double>());
        } catch (const alerts::AlertError& e) {
          throw ConfigError(e.what());
        }
      } else {
        throw ConfigError("threshold \"" + k + "\" must be a number or null");
      }
    }
  }

  c.sink.path = resolve(base_dir, "alerts.jsonl");
  if (const auto a = root.find("alerts"); a != root.end()) {
    only_keys(*a, "alerts", {"cooldown_s", "sink", "recipients"});
    c.alert_cooldown = std::chrono::seconds{get_or<long>(*a, "cooldown_s", 3600, "alerts")};
    if (c.alert_cooldown < std::chrono::seconds::zero()) throw ConfigError("alerts.cooldown_s must be >= 0");
    c.sink.recipients = get_or<std::vector<std::string>>(*a, "recipients", {}, "alerts");
    for (const auto& r : c.sink.recipients) {
      if (!alerts::valid_address(r)) throw ConfigError("invalid recipient address " + r);
    }
    if (const auto s = a->find("sink"); s != a->end()) {
      only_keys(*s, "alerts.sink", {"kind", "path", "url", "token", "smtp"});
      c.sink.kind = get_or<std::string>(*s, "kind", "file", "alerts.sink");
      if (s->contains("path")) c.sink.path = resolve(base_dir, get_or<std::string>(*s, "path", "", "alerts.sink"));
      c.sink.url = get_or<std::string>(*s, "url", "", "alerts.sink");
      c.sink.token = get_or<std::string>(*s, "token", "", "alerts.sink");
      if (const auto m = s->find("smtp"); m != s->end()) {
        only_keys(*m, "alerts.sink.smtp", {"host", "port", "username", "password", "from", "tls"});
        auto& smtp = c.sink.smtp;
        smtp.host = get_or<std::string>(*m, "host", "", "alerts.sink.smtp");
        smtp.port = get_or<int>(*m, "port", 587, "alerts.sink.smtp");
        smtp.username = get_or<std::string>(*m, "username", "", "alerts.sink.smtp");
        smtp.password = get_or<std::string>(*m, "password", "", "alerts.sink.smtp");
        smtp.from = get_or<std::string>(*m, "from", "", "alerts.sink.smtp");
        smtp.tls = get_or<bool>(*m, "tls", true, "alerts.sink.smtp");
      }
    }
  }
  if (c.sink.kind != "file" && c.sink.kind != "webhook" && c.sink.kind != "smtp") {
    throw ConfigError("alerts.sink.kind must be file, webhook or smtp");
  }

  if (const auto s = root.find("store"); s != root.end()) {
    only_keys(*s, "store", {"data_dir", "retention_days", "max_points"});
    c.store.data_dir = resolve(base_dir, get_or<std::string>(*s, "data_dir", "", "store"));
    c.store.retention = std::chrono::hours{24 * get_or<long>(*s, "retention_days", 30, "store")};
    c.store.max_points = get_or<std::size_t>(*s, "max_points", c.store.max_points, "store");
    if (c.store.retention <= std::chrono::hours::zero()) throw ConfigError("store.retention_days must be positive");
  }

  if (const auto f = root.find("forecast"); f != root.end()) {
    only_keys(*f, "forecast", {"window", "min_leaf", "max_depth", "prune", "validation_fraction", "history_hours"});
    auto& p = c.forecast.params;
    p.window = get_or<std::size_t>(*f, "window", p.window, "forecast");
    p.tree.min_leaf = get_or<std::size_t>(*f, "min_leaf", p.tree.min_leaf, "forecast");
    p.tree.max_depth = get_or<std::size_t>(*f, "max_depth", p.tree.max_depth, "forecast");
    p.tree.prune = get_or<bool>(*f, "prune", p.tree.prune, "forecast");
    p.validation_fraction = get_or<double>(*f, "validation_fraction", p.validation_fraction, "forecast");
    c.forecast.history = std::chrono::hours{get_or<long>(*f, "history_hours", 24 * 14, "forecast")};
    if (p.window == 0 || p.tree.min_leaf == 0) throw ConfigError("forecast.window and min_leaf must be positive");
    if (!(p.validation_fraction >= 0.0 && p.validation_fraction < 1.0)) {
      throw ConfigError("forecast.validation_fraction must be in [0, 1)");
    }
  }

  if (const auto a = root.find("api"); a != root.end()) {
    only_keys(*a, "api", {"bind", "port", "cors_origin", "static_dir"});
    c.api.bind_address = get_or<std::string>(*a, "bind", c.api.bind_address, "api");
    c.api.port = get_or<int>(*a, "port", c.api.port, "api");
    c.api.cors_origin = get_or<std::string>(*a, "cors_origin", c.api.cors_origin, "api");
    c.api.static_dir = resolve(base_dir, get_or<std::string>(*a, "static_dir", "", "api"));
  }

  if (const auto e = root.find("edge"); e != root.end()) {
    only_keys(*e, "edge", {"enabled", "bind", "port", "filter", "cors_origin"});
    c.edge.enabled = get_or<bool>(*e, "enabled", false, "edge");
    c.edge.options.bind_address = get_or<std::string>(*e, "bind", c.edge.options.bind_address, "edge");
    c.edge.options.port = get_or<int>(*e, "port", c.edge.options.port, "edge");
    c.edge.options.filter = get_or<std::string>(*e, "filter", c.edge.options.filter, "edge");
    c.edge.options.cors_origin = get_or<std::string>(*e, "cors_origin", c.edge.options.cors_origin, "edge");
    if (!mqtt::valid_filter(c.edge.options.filter)) throw ConfigError("edge.filter is not a valid MQTT filter");
  }
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw ConfigError("cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  auto config = parse_config(text.str(), std::filesystem::absolute(base));
  if (const char* key = std::getenv("AIRLY_API_KEY"); key && *key) config.provider.airly.api_key = key;
  return config;
}

}  // namespace aq::service
