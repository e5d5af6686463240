#include "aq/forecast/forecaster.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <map>

namespace aq::forecast {

namespace {

using std::chrono::hours;

void check_series(std::span<const SeriesPoint> series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!is_hour_aligned(series[i].timestamp))
      throw ForecastError(ForecastError::Kind::InvalidSeries, "series point not aligned to the hour");
    if (i > 0 && !(series[i - 1].timestamp < series[i].timestamp))
      throw ForecastError(ForecastError::Kind::InvalidSeries, "series not strictly ascending");
  }
}

class HourIndex {
 public:
  explicit HourIndex(std::span<const SeriesPoint> series) {
    for (const auto& p : series) values_.emplace(p.timestamp, p.value);
  }

  [[nodiscard]] std::optional<double> at(Instant t) const {
    auto it = values_.find(t);
    return it == values_.end() ? std::nullopt : std::optional<double>(it->second);
  }

  /// Nullopt when any lag in the window is missing.
  [[nodiscard]] std::optional<std::vector<double>> window(Instant anchor, std::size_t w) const {
    std::vector<double> f;
    f.reserve(w + 1);
    for (std::size_t lag = 0; lag < w; ++lag) {
      auto v = at(anchor - hours(static_cast<long>(lag)));
      if (!v) return std::nullopt;
      f.push_back(*v);
    }
    f.push_back(static_cast<double>(hour_of_day(anchor)));
    return f;
  }

 private:
  std::map<Instant, double> values_;
};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string model_fingerprint(std::span<const SeriesPoint> series, const ForecastParams& params,
                              std::size_t rows) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& p : series) {
    const auto t = p.timestamp.time_since_epoch().count();
    h = fnv1a(h, &t, sizeof t);
    h = fnv1a(h, &p.value, sizeof p.value);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "dt-w%zu-l%zu-d%zu-p%d-n%zu-%016llx", params.window, params.tree.min_leaf,
                params.tree.max_depth == TreeParams::kUnlimitedDepth ? std::size_t{0} : params.tree.max_depth,
                params.tree.prune ? 1 : 0, rows, static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::vector<SupervisedRow> build_supervised(std::span<const SeriesPoint> series, std::size_t window,
                                            std::size_t horizon) {
  if (window < 1 || horizon < 1)
    throw ForecastError(ForecastError::Kind::InvalidParams, "window and horizon must be at least 1");
  check_series(series);
  if (series.size() < window + horizon) {
    throw ForecastError(ForecastError::Kind::SeriesTooShort,
                        "series has " + std::to_string(series.size()) + " points, need " +
                            std::to_string(window + horizon));
  }
  const HourIndex index(series);
  std::vector<SupervisedRow> rows;
  for (const auto& p : series) {
    const auto target = index.at(p.timestamp + hours(static_cast<long>(horizon)));
    if (!target) continue;
    auto features = index.window(p.timestamp, window);
    if (!features) continue;
    rows.push_back({std::move(*features), *target});
  }
  return rows;
}

std::vector<double> latest_window(std::span<const SeriesPoint> series, std::size_t window) {
  check_series(series);
  if (series.size() < window) {
    throw ForecastError(ForecastError::Kind::SeriesTooShort, "series shorter than the feature window");
  }
  auto f = HourIndex(series).window(series.back().timestamp, window);
  if (!f) throw ForecastError(ForecastError::Kind::SeriesTooShort, "latest window has missing hours");
  return std::move(*f);
}

TrainedModel train_model(std::span<const SupervisedRow> rows, const ForecastParams& params) {
  if (rows.empty()) throw ForecastError(ForecastError::Kind::SeriesTooShort, "no complete training windows");
  const auto n = rows.size();
  auto held_out = static_cast<std::size_t>(std::floor(static_cast<double>(n) * params.validation_fraction));
  if (!params.tree.prune || held_out >= n) held_out = 0;

  const auto train = rows.first(n - held_out);
  const auto validation = rows.last(held_out);
  DecisionTree tree = fit_tree(train, params.tree);
  if (params.tree.prune) tree = prune(tree, validation);

  TrainedModel model{std::move(tree), train.size(), validation.size(), std::nullopt};
  if (!validation.empty()) model.validation_mae = mean_absolute_error(model.tree, validation);
  return model;
}

ForecastSet forecast_next(std::span<const SeriesPoint> series, Parameter parameter, const ForecastParams& params) {
  if (series.size() < params.window + kHorizons) {
    throw ForecastError(ForecastError::Kind::SeriesTooShort,
                        "series has " + std::to_string(series.size()) + " points, need at least " +
                            std::to_string(params.window + kHorizons));
  }
  const auto features = latest_window(series, params.window);

  ForecastSet out;
  out.parameter = parameter;
  out.base_time = series.back().timestamp;
  std::array<std::size_t, kHorizons> row_counts{};
  std::array<std::exception_ptr, kHorizons> failures{};

  // horizons are independent; the split search inside runs serially when nested
#pragma omp parallel for
  for (int h = 1; h <= static_cast<int>(kHorizons); ++h) {
    const auto slot = static_cast<std::size_t>(h - 1);
    try {
      const auto rows = build_supervised(series, params.window, static_cast<std::size_t>(h));
      const TrainedModel model = train_model(rows, params);
      out.values[slot] = model.tree.predict(features);
      row_counts[slot] = rows.size();
    } catch (...) {
      failures[slot] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  out.model_id = model_fingerprint(series, params, row_counts[0]);
  return out;
}

std::optional<std::size_t> usable_window(std::size_t series_length, const ForecastParams& params) {
  const std::size_t min_rows = 2 * params.tree.min_leaf;
  if (series_length < kHorizons + min_rows) return std::nullopt;
  // rows available for the longest horizon: n - W - H + 1 >= min_rows
  const std::size_t limit = series_length - kHorizons - min_rows + 1;
  if (limit < 1) return std::nullopt;
  return std::min(params.window, limit);
}

}  // namespace aq::forecast
