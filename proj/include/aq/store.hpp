/**
 * @file store.hpp
 * @brief Per-installation hourly time-series store with retention and snapshots.
 */
#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aq/domain.hpp"

namespace aq {

struct SeriesKey {
  std::int64_t installation_id = 0;
  Parameter parameter = Parameter::Pm1;

  friend auto operator<=>(const SeriesKey&, const SeriesKey&) = default;
};

struct SeriesPoint {
  Instant timestamp{};
  double value = 0.0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

class StoreError : public std::runtime_error {
 public:
  enum class Kind { StorageFull, UnalignedTimestamp, InvertedRange, IoError, VersionMismatch, CorruptSnapshot };

  StoreError(Kind kind, std::string message) : std::runtime_error(std::move(message)), kind_(kind) {}
  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Groups samples by UTC hour; each group's value is its arithmetic mean. Output ascending.
std::vector<SeriesPoint> hourly_aggregate(std::span<const std::pair<Instant, double>> samples);

struct StoreOptions {
  std::size_t max_points = 5'000'000;
  std::chrono::seconds retention = std::chrono::hours(24 * 30);
};

/**
 * @brief Embedded key-ordered store: one point per (series, hour), last writer wins.
 *
 * Readers of a series take a shared lock on that series only, so appends to
 * distinct keys proceed in parallel and a query never observes a half-applied
 * append. When a journal is attached every append is written and flushed to it
 * before append() returns.
 */
class SeriesStore {
 public:
  using Contents = std::map<SeriesKey, std::map<Instant, double>>;

  static constexpr int kSnapshotVersion = 1;

  explicit SeriesStore(StoreOptions options = {});
  ~SeriesStore();

  SeriesStore(const SeriesStore&) = delete;
  SeriesStore& operator=(const SeriesStore&) = delete;

  void append(const SeriesKey& key, const SeriesPoint& point);

  /// Half-open window [from, to), ascending.
  [[nodiscard]] std::vector<SeriesPoint> query_range(const SeriesKey& key, Instant from, Instant to) const;
  [[nodiscard]] std::optional<SeriesPoint> latest(const SeriesKey& key) const;
  [[nodiscard]] std::vector<SeriesKey> keys() const;
  [[nodiscard]] std::vector<SeriesKey> keys_for(std::int64_t installation_id) const;
  [[nodiscard]] std::size_t point_count() const;

  /// Drops points older than now - retention. Returns the number removed.
  std::size_t compact(Instant now);

  /// Point-in-time copy of everything stored.
  [[nodiscard]] Contents contents() const;
  /// FNV-1a over the ordered contents; equal stores have equal fingerprints.
  [[nodiscard]] std::uint64_t fingerprint() const;

  void save_snapshot(const std::filesystem::path& path) const;
  /// Replaces the current contents with the snapshot's.
  void load_snapshot(const std::filesystem::path& path);

  /// Replays an existing journal (if any) and appends future writes to it.
  void attach_journal(const std::filesystem::path& path);

  [[nodiscard]] const StoreOptions& options() const noexcept { return options_; }

 private:
  struct Series {
    mutable std::shared_mutex mutex;
    std::map<Instant, double> points;
  };

  Series& series_for_write(const SeriesKey& key);
  const Series* find(const SeriesKey& key) const;
  void apply(const SeriesKey& key, const SeriesPoint& point);

  StoreOptions options_;
  mutable std::shared_mutex index_mutex_;
  std::map<SeriesKey, std::unique_ptr<Series>> index_;
  std::atomic<std::size_t> total_points_{0};

  std::mutex journal_mutex_;
  std::ofstream journal_;
};

}  // namespace aq
