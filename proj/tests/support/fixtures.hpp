#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "aq/time.hpp"

namespace testing {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("aq_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string fixture_line(long id, double lat, double lon, aq::Instant ts,
                                const std::map<std::string, double>& values) {
  std::string out = "{\"installation_id\": " + std::to_string(id);
  char buf[64];
  std::snprintf(buf, sizeof buf, ", \"lat\": %.6f, \"lon\": %.6f", lat, lon);
  out += buf;
  out += ", \"ts\": \"" + aq::format_rfc3339(ts) + "\", \"values\": {";
  bool first = true;
  for (const auto& [k, v] : values) {
    std::snprintf(buf, sizeof buf, "%s\"%s\": %.4f", first ? "" : ", ", k.c_str(), v);
    out += buf;
    first = false;
  }
  return out + "}}";
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// Deterministic hourly PM series for one installation over `hours` hours ending at `last`.
inline std::string hourly_fixture(long id, double lat, double lon, aq::Instant last, int hours, double base = 20.0) {
  std::string out;
  for (int i = hours - 1; i >= 0; --i) {
    const auto ts = last - std::chrono::hours{i};
    const double phase = 2.0 * 3.14159265358979 * aq::hour_of_day(ts) / 24.0;
    const double pm25 = base + 8.0 * std::sin(phase);
    out += fixture_line(id, lat, lon, ts,
                        {{"pm25", pm25}, {"pm10", pm25 * 1.6}, {"temperature", 12.0 + 4.0 * std::cos(phase)},
                         {"humidity", 60.0}, {"pressure", 1013.0}}) +
           "\n";
  }
  return out;
}

}  // namespace testing
