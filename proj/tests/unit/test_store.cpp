#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "aq/store.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace aq;
using namespace std::chrono;

namespace {

const Instant kDay = sys_days{year{2024} / 5 / 1};
const SeriesKey kKey{7, Parameter::Pm25};

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("aq_store_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("append then query") {
  SeriesStore store;
  store.append(kKey, {kDay + hours{3}, 12.5});
  const auto pts = store.query_range(kKey, kDay, kDay + hours{24});
  REQUIRE(pts.size() == 1);
  CHECK(pts[0] == SeriesPoint{kDay + hours{3}, 12.5});
}

TEST_CASE("same-hour append overwrites") {
  SeriesStore store;
  store.append(kKey, {kDay, 1.0});
  store.append(kKey, {kDay, 2.0});
  const auto pts = store.query_range(kKey, kDay, kDay + hours{1});
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].value == 2.0);
  CHECK(store.point_count() == 1);
}

TEST_CASE("unaligned timestamps are rejected") {
  SeriesStore store;
  try {
    store.append(kKey, {kDay + minutes{30}, 1.0});
    FAIL("expected UnalignedTimestamp");
  } catch (const StoreError& e) {
    CHECK(e.kind() == StoreError::Kind::UnalignedTimestamp);
  }
}

TEST_CASE("query_range windows") {
  SeriesStore store;
  for (int h = 0; h < 24; ++h) store.append(kKey, {kDay + hours{h}, static_cast<double>(h)});

  const auto day = store.query_range(kKey, kDay, kDay + hours{24});
  REQUIRE(day.size() == 24);
  CHECK(std::is_sorted(day.begin(), day.end(),
                       [](const SeriesPoint& a, const SeriesPoint& b) { return a.timestamp < b.timestamp; }));
  CHECK(store.query_range(kKey, kDay - hours{48}, kDay - hours{24}).empty());
  CHECK(store.query_range(kKey, kDay + hours{5}, kDay + hours{5}).empty());
  CHECK(store.query_range(SeriesKey{8, Parameter::Pm25}, kDay, kDay + hours{24}).empty());
  CHECK_THROWS_AS(store.query_range(kKey, kDay + hours{2}, kDay), StoreError);
  CHECK(store.latest(kKey)->value == 23.0);
}

TEST_CASE("storage capacity") {
  SeriesStore store(StoreOptions{2, hours{24 * 30}});
  store.append(kKey, {kDay, 1.0});
  store.append(kKey, {kDay + hours{1}, 1.0});
  CHECK_NOTHROW(store.append(kKey, {kDay, 5.0}));
  try {
    store.append(kKey, {kDay + hours{2}, 1.0});
    FAIL("expected StorageFull");
  } catch (const StoreError& e) {
    CHECK(e.kind() == StoreError::Kind::StorageFull);
  }
}

TEST_CASE("hourly_aggregate") {
  const std::vector<std::pair<Instant, double>> two{{kDay + hours{10} + minutes{5}, 10.0},
                                                    {kDay + hours{10} + minutes{35}, 20.0}};
  const auto agg = hourly_aggregate(two);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0] == SeriesPoint{kDay + hours{10}, 15.0});

  const std::vector<std::pair<Instant, double>> one{{kDay + minutes{17}, 3.25}};
  CHECK(hourly_aggregate(one) == std::vector<SeriesPoint>{{kDay, 3.25}});
  CHECK(hourly_aggregate({}).empty());
}

TEST_CASE("hourly_aggregate matches brute-force group-and-mean and is permutation invariant") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> offset(0, 3 * 3600 - 1);
  std::uniform_real_distribution<double> value(0, 100);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<Instant, double>> samples;
    std::vector<std::pair<long long, double>> plain;
    for (int i = 0; i < 2 + trial % 7; ++i) {
      const Instant t = kDay + seconds{offset(rng)};
      const double v = value(rng);
      samples.emplace_back(t, v);
      plain.emplace_back(t.time_since_epoch().count(), v);
    }
    const auto got = hourly_aggregate(samples);
    const auto want = oracle::group_mean(plain);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].timestamp.time_since_epoch().count() == want[i].first);
      CHECK(got[i].value == doctest::Approx(want[i].second).epsilon(1e-12));
    }
    std::shuffle(samples.begin(), samples.end(), rng);
    CHECK(hourly_aggregate(samples) == got);
  }
}

TEST_CASE("three hours with two samples each") {
  const std::vector<std::pair<Instant, double>> s{
      {kDay + minutes{10}, 1.0},  {kDay + minutes{50}, 3.0},  {kDay + minutes{70}, 10.0},
      {kDay + minutes{100}, 20.0}, {kDay + minutes{130}, 7.0}, {kDay + minutes{170}, 8.0}};
  const auto agg = hourly_aggregate(s);
  CHECK(agg == std::vector<SeriesPoint>{{kDay, 2.0}, {kDay + hours{1}, 15.0}, {kDay + hours{2}, 7.5}});
}

TEST_CASE("randomized append/query interleavings keep store invariants") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> hour(0, 200), id(1, 3), op(0, 2);
  std::uniform_real_distribution<double> value(-5, 5);
  SeriesStore store;
  std::map<std::pair<std::int64_t, long long>, double> model;
  for (int i = 0; i < 1000; ++i) {
    const SeriesKey key{id(rng), Parameter::Pm10};
    if (op(rng) < 2) {
      const Instant t = kDay + hours{hour(rng)};
      const double v = value(rng);
      store.append(key, {t, v});
      model[{key.installation_id, t.time_since_epoch().count()}] = v;
    } else {
      int a = hour(rng), b = hour(rng);
      if (a > b) std::swap(a, b);
      const Instant from = kDay + hours{a}, to = kDay + hours{b};
      const auto pts = store.query_range(key, from, to);
      std::vector<SeriesPoint> expected;
      for (const auto& [k, v] : model) {
        const Instant t{seconds{k.second}};
        if (k.first == key.installation_id && t >= from && t < to) expected.push_back({t, v});
      }
      CHECK(pts == expected);
    }
  }
}

TEST_CASE("compaction removes only points older than the retention horizon") {
  SeriesStore store(StoreOptions{1000, hours{24}});
  for (int h = 0; h < 48; ++h) store.append(kKey, {kDay + hours{h}, 1.0});
  const Instant now = kDay + hours{48};
  CHECK(store.compact(now) == 24);
  const auto pts = store.query_range(kKey, kDay, now);
  REQUIRE(pts.size() == 24);
  CHECK(pts.front().timestamp == kDay + hours{24});
  CHECK(store.point_count() == 24);
}

TEST_CASE("snapshot round trip") {
  const auto path = temp_path("snap.jsonl");
  SeriesStore store;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> value(0, 1000);
  for (int h = 0; h < 50; ++h) {
    store.append(kKey, {kDay + hours{h}, value(rng)});
    store.append({9, Parameter::Temperature}, {kDay + hours{h}, value(rng) - 500.0});
  }
  store.save_snapshot(path);

  SeriesStore loaded;
  loaded.append({1, Parameter::Pm1}, {kDay, 1.0});  // replaced by the load
  loaded.load_snapshot(path);
  CHECK(loaded.contents() == store.contents());
  CHECK(loaded.fingerprint() == store.fingerprint());
  CHECK(loaded.point_count() == store.point_count());
  std::filesystem::remove(path);
}

TEST_CASE("empty snapshot round trip") {
  const auto path = temp_path("empty.jsonl");
  SeriesStore empty;
  empty.save_snapshot(path);
  SeriesStore loaded;
  loaded.load_snapshot(path);
  CHECK(loaded.contents().empty());
  std::filesystem::remove(path);
}

TEST_CASE("snapshot version mismatch") {
  const auto path = temp_path("v99.jsonl");
  {
    std::ofstream out(path);
    out << R"({"format":"aq-series-snapshot","version":99,"points":0})" << '\n';
  }
  SeriesStore store;
  try {
    store.load_snapshot(path);
    FAIL("expected VersionMismatch");
  } catch (const StoreError& e) {
    CHECK(e.kind() == StoreError::Kind::VersionMismatch);
  }
  CHECK_THROWS_AS(store.load_snapshot(temp_path("missing.jsonl")), StoreError);
  std::filesystem::remove(path);
}

TEST_CASE("journal makes appends durable across instances") {
  const auto path = temp_path("journal.jsonl");
  std::filesystem::remove(path);
  {
    SeriesStore store;
    store.attach_journal(path);
    store.append(kKey, {kDay, 4.0});
    store.append(kKey, {kDay, 5.0});
    store.append(kKey, {kDay + hours{1}, 6.0});
  }
  SeriesStore recovered;
  recovered.attach_journal(path);
  CHECK(recovered.query_range(kKey, kDay, kDay + hours{2}) ==
        std::vector<SeriesPoint>{{kDay, 5.0}, {kDay + hours{1}, 6.0}});
  std::filesystem::remove(path);
}

TEST_CASE("concurrent writers on distinct keys and readers see whole points") {
  SeriesStore store;
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&store, w] {
      for (int h = 0; h < 500; ++h) store.append({w, Parameter::Pm1}, {kDay + hours{h}, static_cast<double>(h)});
    });
  }
  threads.emplace_back([&store] {
    for (int i = 0; i < 200; ++i) {
      const auto pts = store.query_range({0, Parameter::Pm1}, kDay, kDay + hours{500});
      for (const auto& p : pts) {
        CHECK(p.value == static_cast<double>((p.timestamp - kDay) / hours{1}));
      }
    }
  });
  for (auto& t : threads) t.join();
  CHECK(store.point_count() == 2000);
}
