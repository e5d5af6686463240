/**
 * @file forecaster.hpp
 * @brief Direct multi-horizon forecasting: one regression tree per horizon over lag windows.
 */
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aq/domain.hpp"
#include "aq/forecast/tree.hpp"
#include "aq/store.hpp"

namespace aq::forecast {

inline constexpr std::size_t kHorizons = 3;

/**
 * @brief Lagged-window supervised rows from an hourly series.
 *
 * For every anchor hour t where v(t-W+1)..v(t) and v(t+h) all exist, emits
 * features [v(t), v(t-1), ..., v(t-W+1), hour_of_day(t)] with target v(t+h).
 * Rows touching a missing hour are skipped. Throws SeriesTooShort when the
 * series has fewer than W + h points.
 */
std::vector<SupervisedRow> build_supervised(std::span<const SeriesPoint> series, std::size_t window,
                                            std::size_t horizon);

/// Feature vector for the newest complete window, anchored at the last point.
std::vector<double> latest_window(std::span<const SeriesPoint> series, std::size_t window);

struct ForecastParams {
  std::size_t window = 24;
  TreeParams tree{};
  /// Most recent fraction of rows held out for pruning.
  double validation_fraction = 0.2;
};

struct TrainedModel {
  DecisionTree tree;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
  /// Absent when the validation split is empty.
  std::optional<double> validation_mae;
};

/// Chronological split, fit on the older rows, reduced-error prune on the newest.
TrainedModel train_model(std::span<const SupervisedRow> rows, const ForecastParams& params);

struct ForecastSet {
  Parameter parameter = Parameter::Pm25;
  Instant base_time{};
  /// values[h - 1] predicts base_time + h hours.
  std::array<double, kHorizons> values{};
  std::string model_id;

  friend bool operator==(const ForecastSet&, const ForecastSet&) = default;
};

/// Trains three independent horizon models and predicts from the newest window.
ForecastSet forecast_next(std::span<const SeriesPoint> series, Parameter parameter,
                          const ForecastParams& params = {});

/**
 * @brief Largest usable window for a series of the given length.
 *
 * Leaves room for all horizons and at least 2 * min_leaf training rows; returns
 * nullopt when even a one-hour window does not fit.
 */
std::optional<std::size_t> usable_window(std::size_t series_length, const ForecastParams& params);

}  // namespace aq::forecast
