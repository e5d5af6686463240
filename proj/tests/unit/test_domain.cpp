#include <random>

#include "aq/domain.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace aq;
using namespace std::chrono;

namespace {

const Instant kT = sys_days{year{2024} / 3 / 1} + hours{10};

RawMeasurement raw_with(std::map<Parameter, double> values) { return RawMeasurement{kT, std::move(values)}; }

}  // namespace

TEST_CASE("time: RFC3339 round trip and offsets") {
  CHECK(format_rfc3339(kT) == "2024-03-01T10:00:00Z");
  CHECK(parse_rfc3339("2024-03-01T10:00:00Z") == kT);
  CHECK(parse_rfc3339("2024-03-01T12:00:00+02:00") == kT);
  CHECK(parse_rfc3339("2024-03-01T10:00:00.123Z") == kT);
  CHECK_FALSE(parse_rfc3339("2024-02-30T10:00:00Z"));
  CHECK_FALSE(parse_rfc3339("2024-03-01 10:00"));
  CHECK_FALSE(parse_rfc3339("2024-03-01T10:00:00Zjunk"));
  CHECK(hour_of_day(kT + minutes{59}) == 10);
  CHECK(floor_hour(kT + minutes{59}) == kT);
  CHECK(is_hour_aligned(kT));
  CHECK_FALSE(is_hour_aligned(kT + minutes{30}));
}

TEST_CASE("GeoPoint rejects out-of-range coordinates") {
  CHECK_NOTHROW(GeoPoint(90, 180));
  CHECK_NOTHROW(GeoPoint(-90, -180));
  CHECK_THROWS_AS(GeoPoint(91, 0), DomainError);
  CHECK_THROWS_AS(GeoPoint(0, -180.5), DomainError);
  CHECK_THROWS_AS(GeoPoint(std::nan(""), 0), DomainError);
  try {
    GeoPoint(91, 0);
  } catch (const DomainError& e) {
    CHECK(e.kind() == DomainError::Kind::InvalidCoordinates);
  }
}

TEST_CASE("parameter keys") {
  CHECK(key_of(Parameter::Pm25) == "pm25");
  CHECK(display_name(Parameter::Aqi) == "AQI");
  CHECK(parameter_from_key("PM25") == Parameter::Pm25);
  CHECK(parameter_from_key("humidity") == Parameter::Humidity);
  CHECK_FALSE(parameter_from_key("no2"));
}

TEST_CASE("compute_caqi examples") {
  CHECK(compute_caqi(0.0, std::nullopt) == doctest::Approx(0.0));
  CHECK(*compute_caqi(15.0, std::nullopt) == 25.0);
  // 22.5 -> 37.5 on the PM2.5 scale beats 30 -> 30.0 on the PM10 scale
  CHECK(*compute_caqi(22.5, 30.0) == doctest::Approx(37.5).epsilon(1e-12));
  CHECK(*compute_caqi(std::nullopt, 30.0) == doctest::Approx(30.0).epsilon(1e-12));
  CHECK_FALSE(compute_caqi(std::nullopt, std::nullopt));
  CHECK_THROWS_AS(compute_caqi(-1.0, std::nullopt), DomainError);
}

TEST_CASE("compute_caqi extrapolates above the last breakpoint") {
  // last PM2.5 segment 55..110 -> 75..100 has slope 25/55
  CHECK(*compute_caqi(165.0, std::nullopt) == doctest::Approx(125.0));
  CHECK(*compute_caqi(500.0, std::nullopt) > *compute_caqi(120.0, std::nullopt));
}

TEST_CASE("compute_caqi matches the interpolation oracle and is monotone") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> conc(0.0, 300.0);
  for (int i = 0; i < 500; ++i) {
    const double a = conc(rng), b = conc(rng);
    CHECK(*compute_caqi(a, b) == doctest::Approx(*oracle::caqi(a, b)).epsilon(1e-12));
    // overall index is the max of the single-pollutant calls
    CHECK(*compute_caqi(a, b) == std::max(*compute_caqi(a, std::nullopt), *compute_caqi(std::nullopt, b)));
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(*compute_caqi(lo, 10.0) <= *compute_caqi(hi, 10.0));
    CHECK(*compute_caqi(10.0, lo) <= *compute_caqi(10.0, hi));
  }
}

TEST_CASE("CaqiTable validates its breakpoints") {
  CHECK_THROWS_AS(CaqiTable({{1, 15, 0, 25}}, {{0, 25, 0, 25}}), DomainError);
  CHECK_THROWS_AS(CaqiTable({{0, 15, 0, 25}, {16, 30, 25, 50}}, {{0, 25, 0, 25}}), DomainError);
  CHECK_THROWS_AS(CaqiTable({{0, 15, 0, 25}, {15, 30, 25, 20}}, {{0, 25, 0, 25}}), DomainError);
  const CaqiTable flat({{0, 10, 0, 50}}, {{0, 10, 0, 50}});
  CHECK(*compute_caqi(5.0, std::nullopt, flat) == doctest::Approx(25.0));
}

TEST_CASE("haversine") {
  const GeoPoint a(52.23, 21.01);
  CHECK(haversine_km(a, a) == 0.0);
  CHECK(haversine_km(GeoPoint(0, 0), GeoPoint(0, 1)) == doctest::Approx(111.195).epsilon(0.001 / 111.195));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int i = 0; i < 100; ++i) {
    const GeoPoint p(lat(rng), lon(rng)), q(lat(rng), lon(rng)), r(lat(rng), lon(rng));
    CHECK(haversine_km(p, q) == haversine_km(q, p));
    CHECK(haversine_km(p, q) >= 0.0);
    CHECK(haversine_km(p, r) <= haversine_km(p, q) + haversine_km(q, r) + 1e-9);
    CHECK(haversine_km(p, q) ==
          doctest::Approx(oracle::haversine_km(p.latitude(), p.longitude(), q.latitude(), q.longitude()))
              .epsilon(1e-9));
  }
}

TEST_CASE("validate_measurement") {
  SUBCASE("aqi is derived from pm25") {
    const auto m = validate_measurement(raw_with({{Parameter::Pm25, 12.0}}));
    CHECK(m.pm25 == 12.0);
    CHECK(*m.aqi == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(*m.aqi == doctest::Approx(*oracle::caqi(12.0, std::nullopt)).epsilon(1e-12));
  }
  SUBCASE("input aqi is ignored") {
    const auto m = validate_measurement(raw_with({{Parameter::Pm25, 12.0}, {Parameter::Aqi, 999.0}}));
    CHECK(*m.aqi == doctest::Approx(20.0));
  }
  SUBCASE("aqi alone is not a measurement") {
    CHECK_THROWS_AS(validate_measurement(raw_with({{Parameter::Aqi, 10.0}})), DomainError);
  }
  SUBCASE("empty") {
    try {
      validate_measurement(raw_with({}));
      FAIL("expected AllFieldsAbsent");
    } catch (const DomainError& e) {
      CHECK(e.kind() == DomainError::Kind::AllFieldsAbsent);
    }
  }
  SUBCASE("missing timestamp") {
    try {
      validate_measurement(RawMeasurement{std::nullopt, {{Parameter::Pm25, 1.0}}});
      FAIL("expected MissingTimestamp");
    } catch (const DomainError& e) {
      CHECK(e.kind() == DomainError::Kind::MissingTimestamp);
    }
  }
  SUBCASE("humidity out of range") {
    try {
      validate_measurement(raw_with({{Parameter::Humidity, 120.0}}));
      FAIL("expected OutOfPhysicalRange");
    } catch (const DomainError& e) {
      CHECK(e.kind() == DomainError::Kind::OutOfPhysicalRange);
      CHECK(e.parameter() == Parameter::Humidity);
      CHECK(e.value() == 120.0);
    }
  }
  SUBCASE("range limits") {
    CHECK_NOTHROW(validate_measurement(raw_with({{Parameter::Temperature, -90.0}})));
    CHECK_THROWS(validate_measurement(raw_with({{Parameter::Temperature, 60.5}})));
    CHECK_THROWS(validate_measurement(raw_with({{Parameter::Pressure, 799.0}})));
    CHECK_THROWS(validate_measurement(raw_with({{Parameter::Pm10, -0.1}})));
    CHECK_NOTHROW(validate_measurement(raw_with({{Parameter::Pressure, 1100.0}})));
  }
}

TEST_CASE("validate_measurement is idempotent") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pm(0, 200), temp(-30, 40), pres(950, 1050), hum(0, 100);
  std::bernoulli_distribution present(0.6);
  for (int i = 0; i < 200; ++i) {
    RawMeasurement raw{kT + hours{i}, {}};
    if (present(rng)) raw.values[Parameter::Pm1] = pm(rng);
    if (present(rng)) raw.values[Parameter::Pm25] = pm(rng);
    if (present(rng)) raw.values[Parameter::Pm10] = pm(rng);
    if (present(rng)) raw.values[Parameter::Temperature] = temp(rng);
    if (present(rng)) raw.values[Parameter::Pressure] = pres(rng);
    raw.values[Parameter::Humidity] = hum(rng);
    const auto once = validate_measurement(raw);
    CHECK(validate_measurement(to_raw(once)) == once);
  }
}
