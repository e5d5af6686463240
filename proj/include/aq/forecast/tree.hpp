/**
 * @file tree.hpp
 * @brief Greedy top-down decision-tree induction with reduced-error pruning.
 *
 * Two split criteria are supported. Regression trees score a threshold by
 * variance reduction, SSE(parent) - SSE(left) - SSE(right). Classification
 * trees score it by gain ratio, the information gain divided by the split
 * information of the two branch proportions. Candidate thresholds are the
 * midpoints between consecutive distinct values of a feature, a row goes left
 * when feature <= threshold, and both branches must hold at least min_leaf rows.
 *
 * Induction is fully deterministic: features are searched in ascending index
 * order and thresholds in ascending order, and a later candidate only replaces
 * the incumbent when it scores strictly higher (beyond score_tolerance()), so
 * ties resolve to the lowest feature index and then the smallest threshold.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace aq::forecast {

enum class TreeMode : std::uint8_t { Regression, Classification };

struct TreeParams {
  std::size_t min_leaf = 5;
  std::size_t max_depth = 12;
  TreeMode mode = TreeMode::Regression;
  bool prune = true;

  static constexpr std::size_t kUnlimitedDepth = std::numeric_limits<std::size_t>::max();
};

struct SupervisedRow {
  std::vector<double> features;
  double target = 0.0;

  friend bool operator==(const SupervisedRow&, const SupervisedRow&) = default;
};

struct SplitCandidate {
  std::size_t feature_index = 0;
  double threshold = 0.0;
  double score = 0.0;
  std::size_t left_count = 0;
  std::size_t right_count = 0;
};

class ForecastError : public std::runtime_error {
 public:
  enum class Kind {
    SeriesTooShort,
    InvalidSeries,
    EmptyDataset,
    RaggedFeatures,
    FeatureLengthMismatch,
    InvalidParams,
    InvalidModel,
  };

  ForecastError(Kind kind, std::string message) : std::runtime_error(std::move(message)), kind_(kind) {}
  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Scores within this distance of the incumbent count as ties; scores at or
/// below it count as zero. Scaled by the parent impurity (floored at 1).
inline double score_tolerance(double parent_impurity) {
  return 1e-12 * (parent_impurity > 1.0 ? parent_impurity : 1.0);
}

struct TreeNode {
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::size_t feature_index = 0;
  double threshold = 0.0;
  /// Leaf prediction; internal nodes keep theirs for pruning.
  double value = 0.0;
  std::size_t count = 0;

  [[nodiscard]] bool is_leaf() const noexcept { return left < 0; }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/**
 * @brief Immutable fitted tree stored as a preorder node array (root at 0).
 */
class DecisionTree {
 public:
  static constexpr int kFormatVersion = 1;

  DecisionTree(TreeMode mode, std::size_t feature_count, std::vector<TreeNode> nodes);

  [[nodiscard]] double predict(std::span<const double> features) const;

  [[nodiscard]] TreeMode mode() const noexcept { return mode_; }
  [[nodiscard]] std::size_t feature_count() const noexcept { return feature_count_; }
  [[nodiscard]] const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }
  [[nodiscard]] std::size_t leaf_count() const;
  [[nodiscard]] std::size_t depth() const;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Throws ForecastError(InvalidModel) on version mismatch or malformed structure.
  static DecisionTree from_json(const nlohmann::json& doc);

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  TreeMode mode_;
  std::size_t feature_count_;
  std::vector<TreeNode> nodes_;
};

/// Best threshold on one feature, or nullopt when no split scores above zero.
std::optional<SplitCandidate> best_split(std::span<const SupervisedRow> rows, std::size_t feature_index,
                                         const TreeParams& params);

/// Best split across all features.
std::optional<SplitCandidate> best_split_any(std::span<const SupervisedRow> rows, const TreeParams& params);

DecisionTree fit_tree(std::span<const SupervisedRow> rows, const TreeParams& params);

/// Reduced-error pruning: bottom-up, left before right, a subtree collapses to a
/// leaf when the leaf's validation error is no worse. Empty validation set is a no-op.
DecisionTree prune(const DecisionTree& tree, std::span<const SupervisedRow> validation);

double predict(const DecisionTree& tree, std::span<const double> features);

std::vector<double> predict_batch(const DecisionTree& tree, std::span<const SupervisedRow> rows);

/// SSE for regression trees, misclassification count for classification trees.
double validation_error(const DecisionTree& tree, std::span<const SupervisedRow> rows);

/// Mean absolute error of the tree on rows; 0 for an empty set.
double mean_absolute_error(const DecisionTree& tree, std::span<const SupervisedRow> rows);

}  // namespace aq::forecast
