#pragma once

// Split-search and prediction kernels. Each parallel kernel has a serial twin
// with identical results; the serial versions are the test reference and the
// benchmark baseline.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "aq/forecast/tree.hpp"

namespace aq::forecast::kernels {

/// A node's training subset: rows addressed through an index list.
struct NodeRows {
  std::span<const SupervisedRow> rows;
  std::span<const std::size_t> indices;
};

/// SSE about the mean (regression) or entropy in bits (classification).
double node_impurity(const NodeRows& node, TreeMode mode);

std::optional<SplitCandidate> split_on_feature(const NodeRows& node, std::size_t feature_index,
                                               const TreeParams& params, double parent_impurity);

std::optional<SplitCandidate> best_split_serial(const NodeRows& node, const TreeParams& params);

/// Features are scored concurrently, then reduced in ascending feature order.
std::optional<SplitCandidate> best_split_parallel(const NodeRows& node, const TreeParams& params);

using SplitSearch = std::function<std::optional<SplitCandidate>(const NodeRows&, const TreeParams&)>;

DecisionTree fit_with(std::span<const SupervisedRow> rows, const TreeParams& params, const SplitSearch& search);

inline DecisionTree fit_tree_serial(std::span<const SupervisedRow> rows, const TreeParams& params) {
  return fit_with(rows, params, best_split_serial);
}

inline DecisionTree fit_tree_parallel(std::span<const SupervisedRow> rows, const TreeParams& params) {
  return fit_with(rows, params, best_split_parallel);
}

std::vector<double> predict_batch_serial(const DecisionTree& tree, std::span<const SupervisedRow> rows);
std::vector<double> predict_batch_parallel(const DecisionTree& tree, std::span<const SupervisedRow> rows);

}  // namespace aq::forecast::kernels
