#include "aq/forecast/tree.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "aq/forecast/kernels.hpp"

namespace aq::forecast {

using nlohmann::json;

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

double row_error(TreeMode mode, double prediction, double target) {
  if (mode == TreeMode::Regression) {
    const double d = target - prediction;
    return d * d;
  }
  return prediction == target ? 0.0 : 1.0;
}

class Pruner {
 public:
  Pruner(const DecisionTree& tree, std::span<const SupervisedRow> rows) : tree_(tree), rows_(rows) {}

  std::vector<TreeNode> run() {
    visit(0, all_indices(rows_.size()));
    return std::move(out_);
  }

 private:
  double leaf_error(double value, const std::vector<std::size_t>& idx) const {
    double e = 0.0;
    for (std::size_t i : idx) e += row_error(tree_.mode(), value, rows_[i].target);
    return e;
  }

  // Returns (index in the output array, validation error of the pruned subtree).
  std::pair<std::int32_t, double> visit(std::int32_t node_index, std::vector<std::size_t> idx) {
    const TreeNode& node = tree_.nodes()[static_cast<std::size_t>(node_index)];
    const auto me = static_cast<std::int32_t>(out_.size());
    out_.push_back(node);
    const double as_leaf = leaf_error(node.value, idx);
    if (node.is_leaf()) return {me, as_leaf};

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i : idx) {
      (rows_[i].features[node.feature_index] <= node.threshold ? left : right).push_back(i);
    }
    const auto [l, left_err] = visit(node.left, std::move(left));
    out_[static_cast<std::size_t>(me)].left = l;
    const auto [r, right_err] = visit(node.right, std::move(right));
    out_[static_cast<std::size_t>(me)].right = r;

    const double as_subtree = left_err + right_err;
    if (as_leaf <= as_subtree) {
      out_.resize(static_cast<std::size_t>(me) + 1);
      out_.back().left = -1;
      out_.back().right = -1;
      out_.back().feature_index = 0;
      out_.back().threshold = 0.0;
      return {me, as_leaf};
    }
    return {me, as_subtree};
  }

  const DecisionTree& tree_;
  std::span<const SupervisedRow> rows_;
  std::vector<TreeNode> out_;
};

void check_rows(std::span<const SupervisedRow> rows, std::size_t width) {
  for (const auto& r : rows) {
    if (r.features.size() != width) {
      throw ForecastError(ForecastError::Kind::FeatureLengthMismatch,
                          "expected " + std::to_string(width) + " features, got " +
                              std::to_string(r.features.size()));
    }
  }
}

}  // namespace

DecisionTree::DecisionTree(TreeMode mode, std::size_t feature_count, std::vector<TreeNode> nodes)
    : mode_(mode), feature_count_(feature_count), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ForecastError(ForecastError::Kind::InvalidModel, "tree has no nodes");
}

double DecisionTree::predict(std::span<const double> features) const {
  if (features.size() != feature_count_) {
    throw ForecastError(ForecastError::Kind::FeatureLengthMismatch,
                        "expected " + std::to_string(feature_count_) + " features, got " +
                            std::to_string(features.size()));
  }
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(features[n.feature_index] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

std::size_t DecisionTree::leaf_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.is_leaf() ? 1 : 0;
  return n;
}

std::size_t DecisionTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const TreeNode& n = nodes_[i];
    if (!n.is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(n.left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(n.right), d + 1);
    }
  }
  return best;
}

json DecisionTree::to_json() const {
  json nodes = json::array();
  for (const auto& n : nodes_) {
    json j{{"value", n.value}, {"count", n.count}};
    if (n.is_leaf()) {
      j["leaf"] = true;
    } else {
      j["leaf"] = false;
      j["feature_index"] = n.feature_index;
      j["threshold"] = n.threshold;
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  return json{{"format", "aq-decision-tree"},
              {"version", kFormatVersion},
              {"mode", mode_ == TreeMode::Regression ? "regression" : "classification"},
              {"feature_count", feature_count_},
              {"nodes", std::move(nodes)}};
}

DecisionTree DecisionTree::from_json(const json& doc) {
  auto bad = [](const std::string& why) { return ForecastError(ForecastError::Kind::InvalidModel, why); };
  try {
    if (doc.value("format", "") != "aq-decision-tree") throw bad("not a decision-tree document");
    if (doc.value("version", -1) != kFormatVersion)
      throw bad("unsupported tree format version " + doc.value("version", json(-1)).dump());
    const std::string mode_name = doc.at("mode").get<std::string>();
    TreeMode mode;
    if (mode_name == "regression") {
      mode = TreeMode::Regression;
    } else if (mode_name == "classification") {
      mode = TreeMode::Classification;
    } else {
      throw bad("unknown tree mode " + mode_name);
    }
    const auto width = doc.at("feature_count").get<std::size_t>();
    std::vector<TreeNode> nodes;
    for (const auto& j : doc.at("nodes")) {
      TreeNode n;
      n.value = j.at("value").get<double>();
      n.count = j.value("count", std::size_t{0});
      if (!j.at("leaf").get<bool>()) {
        n.feature_index = j.at("feature_index").get<std::size_t>();
        n.threshold = j.at("threshold").get<double>();
        n.left = j.at("left").get<std::int32_t>();
        n.right = j.at("right").get<std::int32_t>();
        if (n.feature_index >= width) throw bad("feature_index out of range");
      }
      nodes.push_back(n);
    }
    if (nodes.empty()) throw bad("tree has no nodes");

    // the node array must be exactly the preorder walk of a binary tree rooted at 0
    std::size_t expected = 0;
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      if (i != expected++) throw bad("node array is not in preorder");
      const TreeNode& n = nodes[i];
      if (n.is_leaf()) continue;
      if (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(n.left) >= nodes.size() ||
          static_cast<std::size_t>(n.right) >= nodes.size())
        throw bad("child index out of range");
      stack.push_back(static_cast<std::size_t>(n.right));
      stack.push_back(static_cast<std::size_t>(n.left));
    }
    if (expected != nodes.size()) throw bad("unreachable nodes in tree");
    return DecisionTree(mode, width, std::move(nodes));
  } catch (const json::exception& e) {
    throw bad(std::string("malformed tree document: ") + e.what());
  }
}

std::optional<SplitCandidate> best_split(std::span<const SupervisedRow> rows, std::size_t feature_index,
                                         const TreeParams& params) {
  if (rows.empty()) return std::nullopt;
  if (feature_index >= rows.front().features.size())
    throw ForecastError(ForecastError::Kind::FeatureLengthMismatch, "feature_index out of range");
  check_rows(rows, rows.front().features.size());
  const auto idx = all_indices(rows.size());
  const kernels::NodeRows node{rows, idx};
  return kernels::split_on_feature(node, feature_index, params, kernels::node_impurity(node, params.mode));
}

std::optional<SplitCandidate> best_split_any(std::span<const SupervisedRow> rows, const TreeParams& params) {
  if (rows.empty()) return std::nullopt;
  check_rows(rows, rows.front().features.size());
  const auto idx = all_indices(rows.size());
  return kernels::best_split_parallel(kernels::NodeRows{rows, idx}, params);
}

DecisionTree fit_tree(std::span<const SupervisedRow> rows, const TreeParams& params) {
  return kernels::fit_tree_parallel(rows, params);
}

DecisionTree prune(const DecisionTree& tree, std::span<const SupervisedRow> validation) {
  if (validation.empty() || tree.node_count() == 1) return tree;
  check_rows(validation, tree.feature_count());
  return DecisionTree(tree.mode(), tree.feature_count(), Pruner(tree, validation).run());
}

double predict(const DecisionTree& tree, std::span<const double> features) { return tree.predict(features); }

std::vector<double> predict_batch(const DecisionTree& tree, std::span<const SupervisedRow> rows) {
  return kernels::predict_batch_parallel(tree, rows);
}

double validation_error(const DecisionTree& tree, std::span<const SupervisedRow> rows) {
  const auto predictions = predict_batch(tree, rows);
  double e = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) e += row_error(tree.mode(), predictions[i], rows[i].target);
  return e;
}

double mean_absolute_error(const DecisionTree& tree, std::span<const SupervisedRow> rows) {
  if (rows.empty()) return 0.0;
  const auto predictions = predict_batch(tree, rows);
  double e = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) e += std::abs(rows[i].target - predictions[i]);
  return e / static_cast<double>(rows.size());
}

}  // namespace aq::forecast
