#include <thread>

#include "aq/edge.hpp"
#include "aq/gateway.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace aq;
using namespace aq::mqtt;
using namespace std::chrono;

namespace {

const Instant kT = sys_days{year{2024} / 3 / 1} + hours{5};

}  // namespace

TEST_CASE("payload formats") {
  CHECK(gateway::measurement_payload({kT, 12.5}) == R"({"ts":"2024-03-01T05:00:00Z","value":12.5})");
  forecast::ForecastSet f{Parameter::Pm25, kT, {1.5, 2.25, 3}, "dt-x"};
  CHECK(gateway::forecast_payload(f) ==
        R"({"base":"2024-03-01T05:00:00Z","h1":1.5,"h2":2.25,"h3":3.0,"model_id":"dt-x"})");
  // shortest round-trip representation
  const double v = 0.1 + 0.2;
  const auto j = nlohmann::json::parse(gateway::measurement_payload({kT, v}));
  CHECK(j["value"].get<double>() == v);
}

TEST_CASE("gateway publishes retained QoS 1 and buffers while the broker is down") {
  auto broker = std::make_shared<InProcessBroker>();
  auto conn = std::make_shared<InProcessConnection>(broker);
  gateway::Gateway gw(conn, {3, milliseconds{100}});

  std::vector<TopicMessage> seen;
  broker->subscribe("aq/#", [&](const TopicMessage& m) { seen.push_back(m); });

  gw.publish_sample(7, Parameter::Pm25, {kT, 12.5});
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].topic == "aq/7/pm25");
  CHECK(seen[0].qos == 1);
  CHECK(broker->retained("aq/7/pm25") == gateway::measurement_payload({kT, 12.5}));

  gw.publish_sample(7, Parameter::Pm25, {kT + hours{1}, 13});
  CHECK(broker->retained("aq/7/pm25") == gateway::measurement_payload({kT + hours{1}, 13}));

  broker->set_available(false);
  for (int i = 0; i < 5; ++i) {
    try {
      gw.publish_sample(7, Parameter::Pm10, {kT + hours{i}, static_cast<double>(i)});
      FAIL("expected NotConnected");
    } catch (const MqttError& e) {
      CHECK(e.kind() == MqttError::Kind::NotConnected);
    }
  }
  CHECK(gw.buffered() == 3);
  CHECK(gw.dropped() == 2);
  CHECK(gw.flush() == 0);

  broker->set_available(true);
  seen.clear();
  CHECK(gw.flush() == 3);
  REQUIRE(seen.size() == 3);
  // oldest two were dropped; the rest arrive in order
  CHECK(seen[0].payload == gateway::measurement_payload({kT + hours{2}, 2}));
  CHECK(seen[2].payload == gateway::measurement_payload({kT + hours{4}, 4}));
  CHECK(gw.buffered() == 0);
}

TEST_CASE("buffered messages go out before new ones") {
  auto broker = std::make_shared<InProcessBroker>();
  auto conn = std::make_shared<InProcessConnection>(broker);
  gateway::Gateway gw(conn);
  std::vector<std::string> order;
  broker->subscribe("aq/#", [&](const TopicMessage& m) { order.push_back(m.payload); });
  broker->set_available(false);
  CHECK_THROWS(gw.publish({"aq/1/pm25", "1", 1, true}));
  CHECK_THROWS(gw.publish({"aq/1/pm25", "2", 1, true}));
  broker->set_available(true);
  gw.publish({"aq/1/pm25", "3", 1, true});
  CHECK(order == std::vector<std::string>{"1", "2", "3"});
  CHECK(broker->retained("aq/1/pm25") == "3");
}

TEST_CASE("edge cache") {
  edge::EdgeCache cache(3);
  cache.apply({"aq/7/pm25", "a", 1, true}, kT);
  CHECK(cache.size() == 1);
  cache.apply({"aq/7/pm25", "b", 1, true}, kT + seconds{1});
  CHECK(cache.size() == 1);
  CHECK(cache.get("aq/7/pm25")->payload == "b");
  CHECK(cache.get("aq/7/pm25")->received == kT + seconds{1});

  cache.apply({"aq/7/pm10", "c", 1, true}, kT);
  cache.apply({"aq/8/pm10", "d", 1, true}, kT);
  cache.apply({"aq/7/pm25", "e", 1, true}, kT);  // refresh: pm10 of 7 is now the least recently updated
  cache.apply({"aq/9/pm10", "f", 1, true}, kT);
  CHECK(cache.size() == 3);
  CHECK_FALSE(cache.get("aq/7/pm10"));
  CHECK(cache.get("aq/7/pm25"));

  edge::EdgeCache big;
  for (int i = 0; i <= 10'000; ++i) big.apply({"t/" + std::to_string(i), "x", 1, true}, kT);
  CHECK(big.size() == 10'000);
  CHECK_FALSE(big.get("t/0"));
  CHECK(big.get("t/10000"));
}

TEST_CASE("edge serve_request") {
  edge::EdgeCache cache;
  const std::string p25 = R"({"ts":"2024-03-01T05:00:00Z","value":12.5})";
  cache.apply({"aq/7/pm25", p25, 1, true}, kT);
  cache.apply({"aq/7/pm10", R"({"ts":"2024-03-01T05:00:00Z","value":20})", 1, true}, kT);
  cache.apply({"aq/7/pm25/forecast", R"({"base":"x","h1":1,"h2":2,"h3":3,"model_id":"m"})", 1, true}, kT);
  cache.apply({"aq/70/pm25", "{}", 1, true}, kT);
  cache.apply({"aq/7/odd", "not json", 1, true}, kT);

  auto r = edge::serve_request(cache, "/current", {{"installation", "7"}});
  CHECK(r.status == 200);
  CHECK(r.body.find(R"("pm25": )" + p25) != std::string::npos);
  const auto j = nlohmann::json::parse(r.body);
  CHECK(j.size() == 3);
  CHECK(j["odd"] == "not json");
  CHECK(j["pm10"]["value"] == 20);

  r = edge::serve_request(cache, "/forecast", {{"installation", "7"}});
  CHECK(nlohmann::json::parse(r.body)["pm25"]["h3"] == 3);
  CHECK(nlohmann::json::parse(r.body).size() == 1);

  r = edge::serve_request(cache, "/current", {{"installation", "99"}});
  CHECK(r.status == 200);
  CHECK(r.body == "{}");
  CHECK(edge::serve_request(cache, "/current", {}).status == 400);
  CHECK(edge::serve_request(cache, "/current", {{"installation", "7x"}}).status == 400);
  CHECK(edge::serve_request(cache, "/nope", {}).status == 404);
  r = edge::serve_request(cache, "/health", {});
  CHECK(nlohmann::json::parse(r.body) == nlohmann::json{{"status", "ok"}, {"topics", 5}});
}

TEST_CASE("gateway to edge node over the broker, including late join and HTTP") {
  auto broker = std::make_shared<InProcessBroker>();
  gateway::Gateway gw(std::make_shared<InProcessConnection>(broker));
  gw.publish_sample(7, Parameter::Pm25, {kT, 12.5});
  gw.publish_sample(8, Parameter::Pm25, {kT, 99});

  edge::EdgeOptions opts;
  opts.port = 0;
  opts.bind_address = "127.0.0.1";
  edge::EdgeNode node(std::make_shared<InProcessConnection>(broker), opts);
  node.subscribe();
  CHECK(node.cache().size() == 2);  // retained values warm the late joiner
  gw.publish_sample(7, Parameter::Pm10, {kT, 30.25});

  const int port = node.start_http();
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/current?installation=7");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto j = nlohmann::json::parse(res->body);
  CHECK(j["pm25"].dump() == gateway::measurement_payload({kT, 12.5}));
  CHECK(j["pm10"]["value"].get<double>() == 30.25);
  res = client.Get("/current");
  REQUIRE(res);
  CHECK(res->status == 400);
  node.stop();
}
