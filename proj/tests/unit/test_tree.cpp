#include <random>

#include "aq/forecast/kernels.hpp"
#include "aq/forecast/tree.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace aq::forecast;

namespace {

std::vector<SupervisedRow> four_rows() {
  return {{{0.0}, 0.0}, {{1.0}, 0.0}, {{10.0}, 5.0}, {{11.0}, 5.0}};
}

TreeParams regression(std::size_t min_leaf, std::size_t max_depth = 12) {
  return TreeParams{min_leaf, max_depth, TreeMode::Regression, true};
}

std::vector<SupervisedRow> random_rows(std::mt19937_64& rng, std::size_t n, std::size_t f, int range) {
  std::uniform_int_distribution<int> v(0, range);
  std::vector<SupervisedRow> rows(n);
  for (auto& r : rows) {
    for (std::size_t j = 0; j < f; ++j) r.features.push_back(v(rng));
    r.target = v(rng);
  }
  return rows;
}

std::vector<oracle::Row> to_oracle(const std::vector<SupervisedRow>& rows) {
  std::vector<oracle::Row> out;
  for (const auto& r : rows) out.push_back({r.features, r.target});
  return out;
}

std::vector<std::pair<std::size_t, double>> internal_preorder(const DecisionTree& t) {
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& n : t.nodes()) {
    if (!n.is_leaf()) out.emplace_back(n.feature_index, n.threshold);
  }
  return out;
}

}  // namespace

TEST_CASE("best_split on a constant target finds nothing") {
  std::vector<SupervisedRow> rows{{{1.0}, 3.0}, {{2.0}, 3.0}, {{3.0}, 3.0}, {{4.0}, 3.0}};
  CHECK_FALSE(best_split(rows, 0, regression(1)));
}

TEST_CASE("best_split: four-row regression example") {
  const auto rows = four_rows();
  const auto s = best_split(rows, 0, regression(2));
  REQUIRE(s);
  CHECK(s->threshold == 5.5);
  CHECK(s->score == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(s->left_count == 2);
  CHECK(s->right_count == 2);

  const auto o = oracle::exhaustive_regression_split(to_oracle(rows), 2);
  REQUIRE(o);
  CHECK(o->threshold == 5.5);
  CHECK(o->score == doctest::Approx(25.0));
}

TEST_CASE("best_split respects min_leaf on both sides") {
  // the best unconstrained split isolates the single outlier
  std::vector<SupervisedRow> rows{{{0.0}, 0.0}, {{1.0}, 0.0}, {{2.0}, 0.0}, {{3.0}, 100.0}};
  CHECK(best_split(rows, 0, regression(1))->threshold == 2.5);
  const auto s = best_split(rows, 0, regression(2));
  REQUIRE(s);
  CHECK(s->threshold == 1.5);
  CHECK_FALSE(best_split(rows, 0, regression(3)));
}

TEST_CASE("gain ratio: perfectly separated classes score exactly 1") {
  std::vector<SupervisedRow> rows;
  for (int i = 0; i < 6; ++i) rows.push_back({{static_cast<double>(i)}, 0.0});
  for (int i = 6; i < 12; ++i) rows.push_back({{static_cast<double>(i)}, 1.0});
  TreeParams p{1, 12, TreeMode::Classification, false};
  const auto s = best_split(rows, 0, p);
  REQUIRE(s);
  CHECK(s->threshold == 5.5);
  CHECK(s->score == 1.0);
}

TEST_CASE("gain ratio matches the entropy oracle") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    auto rows = random_rows(rng, 8 + trial % 20, 2, 6);
    for (auto& r : rows) r.target = static_cast<double>(static_cast<int>(r.target) % 3);
    TreeParams p{1 + static_cast<std::size_t>(trial % 3), 12, TreeMode::Classification, false};
    for (std::size_t f = 0; f < 2; ++f) {
      const auto got = best_split(rows, f, p);
      const auto want = oracle::exhaustive_gain_ratio_split(to_oracle(rows), p.min_leaf, f);
      REQUIRE(got.has_value() == want.has_value());
      if (got) {
        CHECK(got->threshold == want->threshold);
        CHECK(got->score == doctest::Approx(want->score).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("fit_tree basics") {
  SUBCASE("constant target gives a single leaf") {
    std::vector<SupervisedRow> rows(20, SupervisedRow{{1.0, 2.0}, 7.0});
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].features[0] = static_cast<double>(i);
    const auto t = fit_tree(rows, regression(1));
    CHECK(t.node_count() == 1);
    CHECK(t.predict(std::vector<double>{3.0, 2.0}) == 7.0);
  }
  SUBCASE("four-row example") {
    const auto t = fit_tree(four_rows(), regression(2));
    REQUIRE(t.node_count() == 3);
    CHECK(t.nodes()[0].threshold == 5.5);
    CHECK(t.nodes()[1].value == 0.0);
    CHECK(t.nodes()[2].value == 5.0);
    CHECK(t.predict(std::vector<double>{0.5}) == 0.0);
    CHECK(t.predict(std::vector<double>{100.0}) == 5.0);
    CHECK(t.predict(std::vector<double>{5.5}) == 0.0);
  }
  SUBCASE("min_leaf 1 and unlimited depth memorizes distinct inputs") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<SupervisedRow> rows;
    for (int i = 0; i < 60; ++i) rows.push_back({{static_cast<double>(i) + u(rng), u(rng)}, u(rng) * 100});
    const auto t = fit_tree(rows, regression(1, TreeParams::kUnlimitedDepth));
    for (const auto& r : rows) CHECK(t.predict(r.features) == r.target);
  }
  SUBCASE("max_depth 1 is a stump") {
    std::mt19937_64 rng(2);
    const auto rows = random_rows(rng, 40, 2, 50);
    CHECK(fit_tree(rows, regression(1, 1)).depth() <= 1);
  }
  SUBCASE("classification leaves take the modal class, lowest label on ties") {
    std::vector<SupervisedRow> rows{{{0.0}, 2.0}, {{0.0}, 1.0}, {{0.0}, 2.0}, {{0.0}, 1.0}};
    const auto t = fit_tree(rows, TreeParams{1, 12, TreeMode::Classification, false});
    CHECK(t.node_count() == 1);
    CHECK(t.predict(std::vector<double>{0.0}) == 1.0);
  }
}

TEST_CASE("fit_tree errors") {
  CHECK_THROWS_AS(fit_tree({}, regression(1)), ForecastError);
  std::vector<SupervisedRow> ragged{{{1.0, 2.0}, 0.0}, {{1.0}, 1.0}};
  try {
    fit_tree(ragged, regression(1));
    FAIL("expected RaggedFeatures");
  } catch (const ForecastError& e) {
    CHECK(e.kind() == ForecastError::Kind::RaggedFeatures);
  }
  CHECK_THROWS_AS(fit_tree(four_rows(), TreeParams{0, 12, TreeMode::Regression, true}), ForecastError);
}

TEST_CASE("predict validates feature length") {
  const auto t = fit_tree(four_rows(), regression(2));
  try {
    (void)t.predict(std::vector<double>{1.0, 2.0});
    FAIL("expected FeatureLengthMismatch");
  } catch (const ForecastError& e) {
    CHECK(e.kind() == ForecastError::Kind::FeatureLengthMismatch);
  }
}

TEST_CASE("prune") {
  const std::vector<SupervisedRow> train{{{0.0}, 0.0}, {{1.0}, 0.0}, {{2.0}, 10.0}, {{3.0}, 10.0}};
  const auto tree = fit_tree(train, regression(1));
  REQUIRE(tree.node_count() == 3);
  REQUIRE(tree.nodes()[0].value == 5.0);

  SUBCASE("leaf mean beats the children on validation: collapse") {
    // children predict 0 and 10 -> SSE 25 + 25; root mean 5 -> SSE 0
    const std::vector<SupervisedRow> validation{{{0.5}, 5.0}, {{2.5}, 5.0}};
    const auto pruned = prune(tree, validation);
    CHECK(pruned.node_count() == 1);
    CHECK(pruned.predict(std::vector<double>{0.0}) == 5.0);
  }
  SUBCASE("children win: kept") {
    const std::vector<SupervisedRow> validation{{{0.5}, 0.0}, {{2.5}, 10.0}};
    CHECK(prune(tree, validation) == tree);
  }
  SUBCASE("empty validation set leaves the tree unchanged") { CHECK(prune(tree, {}) == tree); }
  SUBCASE("single leaf is a fixed point") {
    const std::vector<SupervisedRow> constant(4, SupervisedRow{{1.0}, 2.0});
    const auto leaf = fit_tree(constant, regression(1));
    CHECK(prune(leaf, train) == leaf);
  }
}

TEST_CASE("pruning never grows the tree or its validation error") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    const auto train = random_rows(rng, 60, 3, 20);
    const auto validation = random_rows(rng, 20, 3, 20);
    const auto tree = fit_tree(train, regression(1 + trial % 4));
    const auto pruned = prune(tree, validation);
    CHECK(pruned.node_count() <= tree.node_count());
    CHECK(validation_error(pruned, validation) <= validation_error(tree, validation) + 1e-9);
  }
}

TEST_CASE("fit_tree matches exhaustive search at every node") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<int> n(2, 50), f(1, 3), leaf(1, 4);
    const auto rows = random_rows(rng, static_cast<std::size_t>(n(rng)), static_cast<std::size_t>(f(rng)), 9);
    const auto p = regression(static_cast<std::size_t>(leaf(rng)));
    std::vector<std::pair<std::size_t, double>> expected;
    oracle::exhaustive_tree(to_oracle(rows), p.min_leaf, p.max_depth, 0, expected);
    CHECK(internal_preorder(fit_tree(rows, p)) == expected);
  }
}

TEST_CASE("tree properties on random data") {
  std::mt19937_64 rng(77);
  auto transform = [](double x) { return x * x * x + 3.0 * x; };
  for (int trial = 0; trial < 30; ++trial) {
    auto rows = random_rows(rng, 80, 3, 30);
    const auto p = regression(1 + trial % 5);
    const auto tree = fit_tree(rows, p);

    // serial reference kernel and determinism
    CHECK(kernels::fit_tree_serial(rows, p) == tree);
    CHECK(fit_tree(rows, p) == tree);

    // leaves respect min_leaf; predictions stay within the training target range
    double lo = rows[0].target, hi = rows[0].target;
    for (const auto& r : rows) {
      lo = std::min(lo, r.target);
      hi = std::max(hi, r.target);
    }
    for (const auto& n : tree.nodes()) {
      if (n.is_leaf()) CHECK(n.count >= p.min_leaf);
    }
    for (const auto& q : random_rows(rng, 50, 3, 40)) {
      const double y = tree.predict(q.features);
      CHECK(y >= lo);
      CHECK(y <= hi);
    }

    std::vector<std::size_t> idx(rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (auto s = kernels::best_split_serial({rows, idx}, p)) CHECK(s->score > 0.0);

    // a strictly increasing transform of one feature keeps every prediction
    auto moved = rows;
    for (auto& r : moved) r.features[1] = transform(r.features[1]);
    const auto tree2 = fit_tree(moved, p);
    // partitions depend only on the order of observed values, so compare on observed inputs
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(tree2.predict(moved[i].features) == tree.predict(rows[i].features));
    }
  }
}

TEST_CASE("batch prediction kernels agree") {
  std::mt19937_64 rng(4);
  const auto rows = random_rows(rng, 3000, 4, 100);
  const auto tree = fit_tree(rows, regression(3));
  CHECK(kernels::predict_batch_serial(tree, rows) == kernels::predict_batch_parallel(tree, rows));
}

TEST_CASE("model JSON round trip") {
  std::mt19937_64 rng(8);
  const auto rows = random_rows(rng, 100, 3, 20);
  const auto tree = fit_tree(rows, regression(2));
  const auto doc = tree.to_json();
  const auto back = DecisionTree::from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back == tree);
  for (const auto& r : rows) CHECK(back.predict(r.features) == tree.predict(r.features));

  auto bad = doc;
  bad["version"] = 2;
  CHECK_THROWS_AS(DecisionTree::from_json(bad), ForecastError);
  auto cyclic = doc;
  if (tree.node_count() > 1) {
    cyclic["nodes"][0]["left"] = 0;
    CHECK_THROWS_AS(DecisionTree::from_json(cyclic), ForecastError);
  }
}
