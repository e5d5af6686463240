#include <cmath>
#include <cstdio>

#include "aq/ingestion.hpp"

namespace aq::ingestion {

namespace {

std::string point_key(const GeoPoint& p, double radius_km) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "near|%lld|%lld|%.6g", static_cast<long long>(std::llround(p.latitude() * 1e4)),
                static_cast<long long>(std::llround(p.longitude() * 1e4)), radius_km);
  return buf;
}

}  // namespace

CachingProvider::CachingProvider(std::shared_ptr<MeasurementProvider> inner, std::chrono::seconds ttl, Clock clock)
    : inner_(std::move(inner)), ttl_(ttl), clock_(std::move(clock)) {
  if (!inner_) throw IngestionError(IngestionError::Kind::InvalidArgument, "cache needs an inner provider");
  if (ttl_ <= std::chrono::seconds::zero()) {
    throw IngestionError(IngestionError::Kind::InvalidArgument, "cache ttl must be positive");
  }
  if (!clock_) clock_ = wall_clock();
}

template <typename T, typename Fetch>
T CachingProvider::lookup(Slot<T>& slot, const std::string& key, Fetch&& fetch) {
  std::unique_lock lock(mutex_);
  if (const auto hit = slot.entries.find(key); hit != slot.entries.end()) {
    if (clock_() - hit->second.first < ttl_) return hit->second.second;
    slot.entries.erase(hit);
  }
  if (const auto pending = slot.in_flight.find(key); pending != slot.in_flight.end()) {
    auto shared = pending->second;
    lock.unlock();
    return shared.get();
  }
  std::promise<T> promise;
  slot.in_flight.emplace(key, promise.get_future().share());
  ++inner_calls_;
  lock.unlock();

  try {
    T value = fetch();
    lock.lock();
    slot.entries.insert_or_assign(key, std::make_pair(clock_(), value));
    slot.in_flight.erase(key);
    lock.unlock();
    promise.set_value(value);
    return value;
  } catch (...) {
    lock.lock();
    slot.in_flight.erase(key);
    lock.unlock();
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::vector<Installation> CachingProvider::installations_near(const GeoPoint& point, double max_distance_km) {
  return lookup(nearest_, point_key(point, max_distance_km),
                [&] { return inner_->installations_near(point, max_distance_km); });
}

RawBundle CachingProvider::measurements(const Installation& installation) {
  return lookup(bundles_, "bundle|" + std::to_string(installation.id),
                [&] { return inner_->measurements(installation); });
}

std::size_t CachingProvider::inner_calls() const {
  std::lock_guard lock(mutex_);
  return inner_calls_;
}

std::shared_ptr<CachingProvider> with_cache(std::shared_ptr<MeasurementProvider> inner, std::chrono::seconds ttl,
                                            Clock clock) {
  return std::make_shared<CachingProvider>(std::move(inner), ttl, std::move(clock));
}

}  // namespace aq::ingestion
