#include <algorithm>
#include <atomic>
#include <numbers>
#include <random>
#include <thread>

#include "aq/ingestion.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace aq;
using namespace aq::ingestion;
using namespace std::chrono;

namespace {

const Instant kT0 = sys_days{year{2024} / 3 / 1};

Installation inst(std::int64_t id, double lat, double lon) { return {id, GeoPoint(lat, lon), std::nullopt, "test"}; }

// Point `km` north of (lat, lon) on the reference sphere.
double north_of(double lat, double km) { return lat + km / 6371.0 * 180.0 / std::numbers::pi; }

class FakeProvider : public MeasurementProvider {
 public:
  std::vector<Installation> candidates;
  RawBundle bundle;
  std::atomic<int> near_calls{0};
  std::atomic<int> bundle_calls{0};
  std::atomic<int> fail_next{0};
  milliseconds delay{0};

  std::vector<Installation> installations_near(const GeoPoint&, double) override {
    ++near_calls;
    return candidates;
  }
  RawBundle measurements(const Installation&) override {
    ++bundle_calls;
    if (delay.count()) std::this_thread::sleep_for(delay);
    if (fail_next > 0) {
      --fail_next;
      throw IngestionError(IngestionError::Kind::ProviderUnavailable, "down");
    }
    return bundle;
  }
};

template <typename F>
IngestionError::Kind kind_of(F&& f) {
  try {
    f();
  } catch (const IngestionError& e) {
    return e.kind();
  }
  FAIL("no IngestionError thrown");
  return IngestionError::Kind::InvalidArgument;
}

RawMeasurement raw_at(Instant t, double pm25) { return {t, {{Parameter::Pm25, pm25}}}; }

}  // namespace

TEST_CASE("nearest installation") {
  const auto a = inst(11, 50.0, 19.0);
  const auto b = inst(4, 50.01, 19.0);
  FakeProvider p;

  SUBCASE("zero distance wins") {
    p.candidates = {b, a};
    CHECK(nearest_installation(p, a.point, 5.0).id == 11);
  }
  SUBCASE("only candidates inside the radius count") {
    const auto near = inst(1, north_of(50.0, 2.0), 19.0);
    const auto far = inst(2, north_of(50.0, 5.0), 19.0);
    const GeoPoint origin(50.0, 19.0);
    const double d_near = oracle::haversine_km(50.0, 19.0, near.point.latitude(), 19.0);
    const double d_far = oracle::haversine_km(50.0, 19.0, far.point.latitude(), 19.0);
    REQUIRE(d_near == doctest::Approx(2.0).epsilon(1e-9));
    REQUIRE(d_far == doctest::Approx(5.0).epsilon(1e-9));
    p.candidates = {far, near};
    CHECK(nearest_installation(p, origin, 3.0).id == 1);
    CHECK(kind_of([&] { nearest_installation(p, origin, 1.0); }) == IngestionError::Kind::NoInstallationInRange);
  }
  SUBCASE("distance ties go to the lowest id") {
    const std::vector<Installation> c{inst(9, 50.1, 19.0), inst(3, 49.9, 19.0)};
    CHECK(select_nearest(c, GeoPoint(50.0, 19.0), 50.0).id == 3);
  }
  SUBCASE("non-positive radius") {
    CHECK(kind_of([&] { nearest_installation(p, a.point, 0.0); }) == IngestionError::Kind::InvalidArgument);
  }
}

TEST_CASE("nearest selection is invariant under candidate permutation") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> off(-0.2, 0.2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Installation> c;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      // coarse grid so exact distance ties occur
      c.push_back(inst(static_cast<std::int64_t>(rng() % 1000), 50.0 + std::round(off(rng) * 20) / 20,
                       19.0 + std::round(off(rng) * 20) / 20));
    }
    const GeoPoint q(50.0, 19.0);
    std::optional<std::int64_t> first;
    for (int perm = 0; perm < 5; ++perm) {
      std::shuffle(c.begin(), c.end(), rng);
      std::optional<std::int64_t> got;
      try {
        got = select_nearest(c, q, 25.0).id;
      } catch (const IngestionError&) {
      }
      if (perm == 0) {
        first = got;
      } else {
        CHECK(got == first);
      }
    }
  }
}

TEST_CASE("assemble_bundle validates and orders") {
  RawBundle raw;
  raw.current = raw_at(kT0 + hours{30}, 10);
  for (int h = 29; h >= 0; --h) raw.history.push_back(raw_at(kT0 + hours{h}, h));

  SUBCASE("keeps the 24 hours before current, ascending") {
    const auto b = assemble_bundle(raw);
    CHECK(b.current.timestamp == kT0 + hours{30});
    REQUIRE(b.history.size() == 24);
    CHECK(b.history.front().timestamp == kT0 + hours{6});
    CHECK(b.history.back().timestamp == kT0 + hours{29});
    for (std::size_t i = 1; i < b.history.size(); ++i) {
      CHECK(b.history[i].timestamp - b.history[i - 1].timestamp == hours{1});
    }
    CHECK(b.dropped == 0);
  }
  SUBCASE("invalid record is dropped and counted") {
    raw.history[3].values[Parameter::Humidity] = 150;
    const auto b = assemble_bundle(raw);
    CHECK(b.dropped == 1);
  }
  SUBCASE("invalid current falls back to newest valid history") {
    raw.current.values[Parameter::Pm25] = -1;
    const auto b = assemble_bundle(raw);
    CHECK(b.dropped == 1);
    CHECK(b.current.timestamp == kT0 + hours{29});
    CHECK(b.history.back().timestamp == kT0 + hours{28});
  }
  SUBCASE("nothing valid") {
    RawBundle bad;
    bad.current.values[Parameter::Pm25] = 1;  // no timestamp
    CHECK(kind_of([&] { assemble_bundle(bad); }) == IngestionError::Kind::MalformedResponse);
  }
  SUBCASE("duplicate hours collapse to the later record") {
    raw.history.push_back(raw_at(kT0 + hours{29}, 99));
    const auto b = assemble_bundle(raw);
    CHECK(b.history.back().pm25 == 99);
    CHECK(b.history.size() == 24);
  }
}

TEST_CASE("fixture parsing") {
  const auto rec = parse_fixture_line(
      R"({"installation_id": 7, "lat": 50.06, "lon": 19.94, "ts": "2024-03-01T05:00:00Z", "values": {"pm25": 12.5, "humidity": 40}})");
  CHECK(rec.installation_id == 7);
  CHECK(rec.timestamp == kT0 + hours{5});
  CHECK(rec.values.at(Parameter::Pm25) == 12.5);
  CHECK(rec.values.size() == 2);

  CHECK_THROWS(parse_fixture_line(R"({"installation_id": 7})"));
  CHECK_THROWS(parse_fixture_line(R"({"installation_id": 7, "lat": 99, "lon": 0, "ts": "2024-03-01T05:00:00Z", "values": {}})"));
  CHECK_THROWS(parse_fixture_line(R"({"installation_id": 7, "lat": 1, "lon": 0, "ts": "yesterday", "values": {}})"));
  CHECK_THROWS(parse_fixture_line(R"({"installation_id": 7, "lat": 1, "lon": 0, "ts": "2024-03-01T05:00:00Z", "values": {"no2": 3}})"));
}

TEST_CASE("replay provider") {
  testing::TempDir dir("ingest");
  const Instant last = kT0 + hours{47};
  testing::write_file(dir / "f.jsonl", testing::hourly_fixture(7, 50.06, 19.94, last, 48) +
                                          testing::hourly_fixture(9, 50.10, 19.90, last, 48));

  SUBCASE("48 records give current = latest and history = previous 24") {
    auto p = load_replay_provider(dir / "f.jsonl");
    const auto b = fetch_measurements(*p, nearest_installation(*p, GeoPoint(50.06, 19.94), 10.0));
    CHECK(b.current.timestamp == last);
    REQUIRE(b.history.size() == 24);
    CHECK(b.history.front().timestamp == last - hours{24});
    CHECK(b.history.back().timestamp == last - hours{1});
    CHECK(b.dropped == 0);
  }
  SUBCASE("nearest answers come from the fixture installations") {
    auto p = load_replay_provider(dir / "f.jsonl");
    CHECK(nearest_installation(*p, GeoPoint(50.099, 19.9), 50.0).id == 9);
    CHECK(nearest_installation(*p, GeoPoint(50.0, 19.94), 50.0).id == 7);
    CHECK(p->installations().size() == 2);
    CHECK(p->timestamps().size() == 48);
  }
  SUBCASE("clock moves the window") {
    auto p = load_replay_provider(dir / "f.jsonl");
    Instant now = kT0 + hours{10};
    p->follow_clock([&] { return now; });
    auto b = fetch_measurements(*p, inst(7, 50.06, 19.94));
    CHECK(b.current.timestamp == now);
    CHECK(b.history.size() == 10);
    now = kT0 - hours{1};
    CHECK(kind_of([&] { p->measurements(inst(7, 50.06, 19.94)); }) == IngestionError::Kind::NoMeasurements);
  }
  SUBCASE("referentially transparent") {
    auto p = load_replay_provider(dir / "f.jsonl");
    auto q = load_replay_provider(dir / "f.jsonl");
    for (int i = 0; i < 3; ++i) {
      CHECK(fetch_measurements(*p, inst(9, 0, 0)) == fetch_measurements(*q, inst(9, 0, 0)));
      CHECK(p->installations_near(GeoPoint(50, 19.9), 30) == q->installations_near(GeoPoint(50, 19.9), 30));
    }
  }
  SUBCASE("unknown installation") {
    auto p = load_replay_provider(dir / "f.jsonl");
    CHECK(kind_of([&] { p->measurements(inst(1234, 0, 0)); }) == IngestionError::Kind::UnknownInstallation);
  }
  SUBCASE("empty file answers NoInstallationInRange") {
    testing::write_file(dir / "empty.jsonl", "");
    auto p = load_replay_provider(dir / "empty.jsonl");
    CHECK(kind_of([&] { nearest_installation(*p, GeoPoint(0, 0), 20000.0); }) ==
          IngestionError::Kind::NoInstallationInRange);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([&] { load_replay_provider(dir / "nope.jsonl"); }) == IngestionError::Kind::FixtureNotFound);
    CHECK(kind_of([&] { load_replay_provider(dir.path()); }) == IngestionError::Kind::FixtureNotFound);
  }
  SUBCASE("parse error reports the line") {
    testing::write_file(dir / "bad.jsonl", testing::hourly_fixture(7, 50, 19, last, 2) + "\n{oops\n");
    try {
      load_replay_provider(dir / "bad.jsonl");
      FAIL("expected FixtureParseError");
    } catch (const IngestionError& e) {
      CHECK(e.kind() == IngestionError::Kind::FixtureParseError);
      CHECK(e.line_number() == 4);
    }
  }
}

TEST_CASE("cache decorator") {
  auto inner = std::make_shared<FakeProvider>();
  inner->bundle.current = raw_at(kT0, 5);
  Instant now = kT0;
  auto cached = with_cache(inner, seconds{60}, [&] { return now; });
  const auto i7 = inst(7, 50, 19);

  SUBCASE("hit within ttl") {
    const auto a = fetch_measurements(*cached, i7);
    now += seconds{59};
    const auto b = fetch_measurements(*cached, i7);
    CHECK(inner->bundle_calls == 1);
    CHECK(a == b);
  }
  SUBCASE("expiry") {
    fetch_measurements(*cached, i7);
    now += seconds{61};
    fetch_measurements(*cached, i7);
    CHECK(inner->bundle_calls == 2);
  }
  SUBCASE("errors are not cached") {
    inner->fail_next = 1;
    CHECK_THROWS_AS(fetch_measurements(*cached, i7), IngestionError);
    CHECK_NOTHROW(fetch_measurements(*cached, i7));
    CHECK(inner->bundle_calls == 2);
  }
  SUBCASE("point keys round to 4 decimals") {
    cached->installations_near(GeoPoint(50.00001, 19.00001), 5);
    cached->installations_near(GeoPoint(50.00002, 19.0), 5);
    CHECK(inner->near_calls == 1);
    cached->installations_near(GeoPoint(50.001, 19.0), 5);
    CHECK(inner->near_calls == 2);
    cached->installations_near(GeoPoint(50.001, 19.0), 6);
    CHECK(inner->near_calls == 3);
  }
  SUBCASE("concurrent identical requests coalesce") {
    inner->delay = milliseconds{100};
    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int i = 0; i < 8; ++i) {
      threads.emplace_back([&] {
        if (fetch_measurements(*cached, i7).current.pm25 == 5) ++ok;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(ok == 8);
    CHECK(inner->bundle_calls == 1);
  }
  SUBCASE("bad ttl") {
    CHECK(kind_of([&] { with_cache(inner, seconds{0}); }) == IngestionError::Kind::InvalidArgument);
  }
}

TEST_CASE("airly adapter") {
  net::HttpResult next;
  std::string last_url;
  net::HeaderList last_headers;
  AirlyOptions opts;
  opts.base_url = "https://example.invalid";
  opts.api_key = "k3y";
  AirlyProvider p(opts, [&](const std::string& url, const net::HeaderList& h) {
    last_url = url;
    last_headers = h;
    return next;
  });

  SUBCASE("nearest") {
    next = {200, R"([{"id": 8077, "location": {"latitude": 50.062006, "longitude": 19.940984}, "elevation": 220.38},
                     {"id": 42, "location": {"latitude": 50.07, "longitude": 19.95}}])",
            {}};
    const auto found = nearest_installation(p, GeoPoint(50.062, 19.941), 3.0);
    CHECK(found.id == 8077);
    CHECK(found.elevation_m == 220.38);
    CHECK(last_url.find("/v2/installations/nearest?lat=50.062000&lng=19.941000") != std::string::npos);
    CHECK(std::find(last_headers.begin(), last_headers.end(), std::pair<std::string, std::string>{"apikey", "k3y"}) !=
          last_headers.end());
  }
  SUBCASE("measurements") {
    next = {200, R"({"current": {"fromDateTime": "2024-03-01T04:24:48.652Z", "tillDateTime": "2024-03-01T05:24:48.652Z",
                       "values": [{"name": "PM25", "value": 19.76}, {"name": "PM10", "value": 37.52},
                                  {"name": "HUMIDITY", "value": 66.68}, {"name": "WIND_SPEED", "value": 3}]},
                     "history": [{"fromDateTime": "2024-03-01T03:00:00.000Z", "tillDateTime": "2024-03-01T04:00:00.000Z",
                                  "values": [{"name": "PM25", "value": 11}]},
                                 {"fromDateTime": "2024-03-01T04:00:00.000Z", "tillDateTime": "2024-03-01T05:00:00.000Z",
                                  "values": [{"name": "HUMIDITY", "value": 150}]}],
                     "forecast": [{"fromDateTime": "2024-03-01T06:00:00.000Z", "values": [{"name": "PM25", "value": 20}]}]})",
            {}};
    const auto b = fetch_measurements(p, inst(8077, 50, 19));
    CHECK(b.current.timestamp == kT0 + hours{5});
    CHECK(b.current.pm25 == 19.76);
    CHECK(b.current.aqi.has_value());
    REQUIRE(b.history.size() == 1);
    CHECK(b.history[0].timestamp == kT0 + hours{3});
    CHECK(b.dropped == 1);
    CHECK(b.provider_forecast.size() == 1);
    CHECK(last_url == "https://example.invalid/v2/measurements/installation?installationId=8077");
  }
  SUBCASE("429 maps to RateLimited with Retry-After") {
    next = {429, "", {{"retry-after", "60"}}};
    try {
      fetch_measurements(p, inst(1, 0, 0));
      FAIL("expected RateLimited");
    } catch (const IngestionError& e) {
      CHECK(e.kind() == IngestionError::Kind::RateLimited);
      CHECK(e.retry_after() == seconds{60});
    }
  }
  SUBCASE("error statuses and bad bodies") {
    next = {503, "", {}};
    CHECK(kind_of([&] { p.measurements(inst(1, 0, 0)); }) == IngestionError::Kind::ProviderUnavailable);
    next = {200, "<html>", {}};
    CHECK(kind_of([&] { p.measurements(inst(1, 0, 0)); }) == IngestionError::Kind::MalformedResponse);
    next = {200, R"({"history": []})", {}};
    CHECK(kind_of([&] { p.measurements(inst(1, 0, 0)); }) == IngestionError::Kind::MalformedResponse);
  }
  SUBCASE("transport failure") {
    AirlyProvider down(opts, [](const std::string&, const net::HeaderList&) -> net::HttpResult {
      throw net::TransportError("connection refused");
    });
    CHECK(kind_of([&] { down.installations_near(GeoPoint(0, 0), 1); }) == IngestionError::Kind::ProviderUnavailable);
  }
}
