#include "aq/forecast/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace aq::forecast::kernels {

namespace {

// Below this many (row, feature) cells the thread fork costs more than it saves.
constexpr std::size_t kParallelCells = 4096;

double entropy_bits(std::span<const std::size_t> counts, std::size_t total) {
  if (total == 0) return 0.0;
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return (mid > lo && mid < hi) ? mid : lo;
}

std::vector<std::size_t> sorted_by_feature(const NodeRows& node, std::size_t feature) {
  std::vector<std::size_t> order(node.indices.begin(), node.indices.end());
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double xa = node.rows[a].features[feature];
    const double xb = node.rows[b].features[feature];
    return xa < xb || (xa == xb && a < b);
  });
  return order;
}

bool improves(const std::optional<SplitCandidate>& best, double score, double tol) {
  return score > tol && (!best || score > best->score + tol);
}

std::optional<SplitCandidate> regression_split(const NodeRows& node, std::size_t feature,
                                               const TreeParams& params, double parent_sse) {
  const std::size_t n = node.indices.size();
  const auto order = sorted_by_feature(node, feature);

  double mean = 0.0;
  for (std::size_t i : node.indices) mean += node.rows[i].target;
  mean /= static_cast<double>(n);

  // prefix sums over centered targets keep the SSE differences well conditioned
  double total_s = 0.0;
  for (std::size_t i : order) total_s += node.rows[i].target - mean;

  const double tol = score_tolerance(parent_sse);
  std::optional<SplitCandidate> best;
  double s_left = 0.0;
  double q_left = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const double c = node.rows[order[k - 1]].target - mean;
    s_left += c;
    q_left += c * c;
    const double x_prev = node.rows[order[k - 1]].features[feature];
    const double x_next = node.rows[order[k]].features[feature];
    if (!(x_prev < x_next)) continue;
    if (k < params.min_leaf || n - k < params.min_leaf) continue;

    const auto nl = static_cast<double>(k);
    const auto nr = static_cast<double>(n - k);
    const double s_right = total_s - s_left;
    const double q_right = parent_sse - q_left;
    const double sse_left = q_left - s_left * s_left / nl;
    const double sse_right = q_right - s_right * s_right / nr;
    const double score = parent_sse - sse_left - sse_right;
    if (improves(best, score, tol)) {
      best = SplitCandidate{feature, midpoint(x_prev, x_next), score, k, n - k};
    }
  }
  return best;
}

std::optional<SplitCandidate> classification_split(const NodeRows& node, std::size_t feature,
                                                   const TreeParams& params, double parent_entropy) {
  const std::size_t n = node.indices.size();
  const auto order = sorted_by_feature(node, feature);

  std::vector<double> labels;
  labels.reserve(n);
  for (std::size_t i : node.indices) labels.push_back(node.rows[i].target);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  auto class_of = [&](double y) {
    return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), y) - labels.begin());
  };

  std::vector<std::size_t> left(labels.size(), 0);
  std::vector<std::size_t> right(labels.size(), 0);
  for (std::size_t i : node.indices) ++right[class_of(node.rows[i].target)];

  const double tol = score_tolerance(1.0);
  const auto total = static_cast<double>(n);
  std::optional<SplitCandidate> best;
  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t cls = class_of(node.rows[order[k - 1]].target);
    ++left[cls];
    --right[cls];
    const double x_prev = node.rows[order[k - 1]].features[feature];
    const double x_next = node.rows[order[k]].features[feature];
    if (!(x_prev < x_next)) continue;
    if (k < params.min_leaf || n - k < params.min_leaf) continue;

    const double pl = static_cast<double>(k) / total;
    const double pr = static_cast<double>(n - k) / total;
    const double split_info = -(pl * std::log2(pl)) - (pr * std::log2(pr));
    if (!(split_info > 0.0)) continue;
    const double gain = parent_entropy - pl * entropy_bits(left, k) - pr * entropy_bits(right, n - k);
    if (!(gain > tol)) continue;
    const double score = gain / split_info;
    if (improves(best, score, tol)) {
      best = SplitCandidate{feature, midpoint(x_prev, x_next), score, k, n - k};
    }
  }
  return best;
}

std::size_t feature_count_of(const NodeRows& node) {
  return node.indices.empty() ? 0 : node.rows[node.indices.front()].features.size();
}

std::optional<SplitCandidate> reduce_in_order(const std::vector<std::optional<SplitCandidate>>& per_feature,
                                              double tol) {
  std::optional<SplitCandidate> best;
  for (const auto& c : per_feature) {
    if (c && improves(best, c->score, tol)) best = c;
  }
  return best;
}

double tolerance_for(const TreeParams& params, double parent_impurity) {
  return params.mode == TreeMode::Regression ? score_tolerance(parent_impurity) : score_tolerance(1.0);
}

double leaf_value(const NodeRows& node, TreeMode mode) {
  if (mode == TreeMode::Regression) {
    double sum = 0.0;
    for (std::size_t i : node.indices) sum += node.rows[i].target;
    return sum / static_cast<double>(node.indices.size());
  }
  std::map<double, std::size_t> counts;
  for (std::size_t i : node.indices) ++counts[node.rows[i].target];
  double label = counts.begin()->first;
  std::size_t best = 0;
  for (const auto& [y, c] : counts) {
    if (c > best) {
      best = c;
      label = y;
    }
  }
  return label;
}

class Builder {
 public:
  Builder(std::span<const SupervisedRow> rows, const TreeParams& params, const SplitSearch& search)
      : rows_(rows), params_(params), search_(search) {}

  std::vector<TreeNode> run() {
    std::vector<std::size_t> all(rows_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(std::move(all), 0);
    return std::move(nodes_);
  }

 private:
  std::int32_t grow(std::vector<std::size_t> indices, std::size_t depth) {
    const NodeRows node{rows_, indices};
    const auto me = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(TreeNode{-1, -1, 0, 0.0, leaf_value(node, params_.mode), indices.size()});

    if (indices.size() < 2 * params_.min_leaf || depth >= params_.max_depth) return me;
    const auto split = search_(node, params_);
    if (!split) return me;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i : indices) {
      (rows_[i].features[split->feature_index] <= split->threshold ? left : right).push_back(i);
    }
    indices.clear();
    indices.shrink_to_fit();

    const std::int32_t l = grow(std::move(left), depth + 1);
    const std::int32_t r = grow(std::move(right), depth + 1);
    TreeNode& self = nodes_[static_cast<std::size_t>(me)];
    self.left = l;
    self.right = r;
    self.feature_index = split->feature_index;
    self.threshold = split->threshold;
    return me;
  }

  std::span<const SupervisedRow> rows_;
  const TreeParams& params_;
  const SplitSearch& search_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

double node_impurity(const NodeRows& node, TreeMode mode) {
  const std::size_t n = node.indices.size();
  if (n == 0) return 0.0;
  if (mode == TreeMode::Regression) {
    double mean = 0.0;
    for (std::size_t i : node.indices) mean += node.rows[i].target;
    mean /= static_cast<double>(n);
    double sse = 0.0;
    for (std::size_t i : node.indices) {
      const double d = node.rows[i].target - mean;
      sse += d * d;
    }
    return sse;
  }
  std::map<double, std::size_t> counts;
  for (std::size_t i : node.indices) ++counts[node.rows[i].target];
  std::vector<std::size_t> c;
  for (const auto& [y, k] : counts) c.push_back(k);
  return entropy_bits(c, n);
}

std::optional<SplitCandidate> split_on_feature(const NodeRows& node, std::size_t feature_index,
                                               const TreeParams& params, double parent_impurity) {
  if (node.indices.size() < 2) return std::nullopt;
  return params.mode == TreeMode::Regression
             ? regression_split(node, feature_index, params, parent_impurity)
             : classification_split(node, feature_index, params, parent_impurity);
}

std::optional<SplitCandidate> best_split_serial(const NodeRows& node, const TreeParams& params) {
  const std::size_t f = feature_count_of(node);
  const double parent = node_impurity(node, params.mode);
  std::vector<std::optional<SplitCandidate>> per_feature(f);
  for (std::size_t j = 0; j < f; ++j) per_feature[j] = split_on_feature(node, j, params, parent);
  return reduce_in_order(per_feature, tolerance_for(params, parent));
}

std::optional<SplitCandidate> best_split_parallel(const NodeRows& node, const TreeParams& params) {
  const std::size_t f = feature_count_of(node);
  const double parent = node_impurity(node, params.mode);
  std::vector<std::optional<SplitCandidate>> per_feature(f);
  const bool wide = node.indices.size() * f >= kParallelCells;
  const auto features = static_cast<std::ptrdiff_t>(f);

#pragma omp parallel for schedule(dynamic) if (wide)
  for (std::ptrdiff_t j = 0; j < features; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    per_feature[jj] = split_on_feature(node, jj, params, parent);
  }
  return reduce_in_order(per_feature, tolerance_for(params, parent));
}

DecisionTree fit_with(std::span<const SupervisedRow> rows, const TreeParams& params, const SplitSearch& search) {
  if (rows.empty()) throw ForecastError(ForecastError::Kind::EmptyDataset, "cannot fit a tree on zero rows");
  if (params.min_leaf < 1 || params.max_depth < 1)
    throw ForecastError(ForecastError::Kind::InvalidParams, "min_leaf and max_depth must be at least 1");
  const std::size_t width = rows.front().features.size();
  for (const auto& r : rows) {
    if (r.features.size() != width)
      throw ForecastError(ForecastError::Kind::RaggedFeatures, "rows have differing feature lengths");
  }
  Builder builder(rows, params, search);
  return DecisionTree(params.mode, width, builder.run());
}

std::vector<double> predict_batch_serial(const DecisionTree& tree, std::span<const SupervisedRow> rows) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = tree.predict(rows[i].features);
  return out;
}

std::vector<double> predict_batch_parallel(const DecisionTree& tree, std::span<const SupervisedRow> rows) {
  std::vector<double> out(rows.size());
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
  std::exception_ptr failure;

#pragma omp parallel for if (rows.size() >= 1024)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = tree.predict(rows[static_cast<std::size_t>(i)].features);
    } catch (...) {
#pragma omp critical(aq_predict_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace aq::forecast::kernels
