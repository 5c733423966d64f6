#include <catch2/catch_amalgamated.hpp>

#include "treeflow/treeflow.hpp"

using namespace treeflow;
using Catch::Matchers::ContainsSubstring;

namespace {

Dataset two_point_stump_data() {
  Dataset ds;
  ds.features.resize(2, 1);
  ds.features << 0.0, 1.0;
  ds.labels = {0, 1};
  ds.class_count = 2;
  ds.feature_names = {"x"};
  return ds;
}

Dataset xor_data() {
  Dataset ds;
  ds.features.resize(4, 2);
  ds.features << 1, 1, 1, -1, -1, 1, -1, -1;
  ds.labels = {1, 0, 0, 1};  // label = [x0 * x1 > 0]
  ds.class_count = 2;
  ds.feature_names = {"x0", "x1"};
  return ds;
}

}  // namespace

TEST_CASE("two separable points yield a midpoint stump", "[tree]") {
  Dataset ds = two_point_stump_data();
  DecisionTree t = fit_tree(ds, 1);
  REQUIRE(t.nodes.size() == 3);
  REQUIRE(t.nodes[0].split.has_value());
  CHECK(t.nodes[0].split->feature == 0);
  CHECK(t.nodes[0].split->threshold == 0.5);
  CHECK(t.max_depth == 1);

  // children are pure leaves; boundary points go left (<=)
  const TreeNode& left = t.nodes[static_cast<std::size_t>(*t.nodes[0].left)];
  const TreeNode& right = t.nodes[static_cast<std::size_t>(*t.nodes[0].right)];
  CHECK(left.is_leaf());
  CHECK(right.is_leaf());
  CHECK(left.prediction == 0);
  CHECK(right.prediction == 1);
  Vector boundary(1);
  boundary << 0.5;
  CHECK(predict(t, boundary).label == 0);
}

TEST_CASE("a single-label dataset never splits", "[tree]") {
  Dataset ds;
  ds.features.resize(3, 1);
  ds.features << 0.0, 1.0, 2.0;
  ds.labels = {1, 1, 1};
  ds.class_count = 2;
  ds.feature_names = {"x"};
  DecisionTree t = fit_tree(ds, 10);
  REQUIRE(t.nodes.size() == 1);
  CHECK(t.nodes[0].is_leaf());
  CHECK(t.nodes[0].prediction == 1);
  CHECK(t.max_depth == 0);
}

TEST_CASE("identical feature rows with mixed labels become a majority leaf", "[tree]") {
  Dataset ds;
  ds.features.resize(3, 1);
  ds.features << 3.0, 3.0, 3.0;
  ds.labels = {0, 1, 1};
  ds.class_count = 2;
  ds.feature_names = {"x"};
  DecisionTree t = fit_tree(ds, 10);
  REQUIRE(t.nodes.size() == 1);
  CHECK(t.nodes[0].prediction == 1);
}

TEST_CASE("depth-2 growth separates the XOR corners", "[tree]") {
  Dataset ds = xor_data();
  DecisionTree t = fit_tree(ds, 2);
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    CHECK(predict(t, ds.features.row(r)).label ==
          ds.labels[static_cast<std::size_t>(r)]);
  }
  CHECK(t.max_depth == 2);

  // depth 1 cannot improve on chance for XOR, but the tree still grows
  DecisionTree shallow = fit_tree(ds, 1);
  int correct = 0;
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    correct += predict(shallow, ds.features.row(r)).label ==
               ds.labels[static_cast<std::size_t>(r)];
  }
  CHECK(correct == 2);
}

TEST_CASE("leaf distributions report class fractions", "[tree]") {
  // Best stump splits at 3.5: left {0,0,0,0} pure, right {1,1,1,0} mixed 3:1.
  Dataset ds;
  ds.features.resize(8, 1);
  ds.features << 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0;
  ds.labels = {0, 0, 0, 0, 1, 1, 1, 0};
  ds.class_count = 2;
  ds.feature_names = {"x"};
  DecisionTree t = fit_tree(ds, 1);
  REQUIRE(t.nodes[0].split.has_value());
  CHECK(t.nodes[0].split->threshold == 3.5);

  Vector probe(1);
  probe << 5.0;
  TreePrediction p = predict(t, probe);
  CHECK(p.label == 1);
  REQUIRE(p.distribution.size() == 2);
  CHECK(p.distribution(0) == 0.25);
  CHECK(p.distribution(1) == 0.75);

  probe << 0.0;
  TreePrediction left = predict(t, probe);
  CHECK(left.label == 0);
  CHECK(left.distribution(0) == 1.0);
  CHECK(left.distribution(1) == 0.0);
}

TEST_CASE("per-level decisions replay the routing and then exhaust", "[tree]") {
  Dataset ds = two_point_stump_data();
  DecisionTree t = fit_tree(ds, 1);
  Vector lo(1), hi(1);
  lo << -1.0;
  hi << 2.0;
  CHECK(tree_decision(t, lo, 0) == Decision::Left);
  CHECK(tree_decision(t, hi, 0) == Decision::Right);
  CHECK(tree_decision(t, lo, 1) == Decision::Exhausted);
  CHECK(tree_decision(t, hi, 5) == Decision::Exhausted);
  CHECK_THROWS(tree_decision(t, lo, -1));
}

TEST_CASE("replaying decisions step by step reaches the predicted leaf", "[tree]") {
  Dataset ds = make_named_blobs("9_grid", 120, 5);
  DecisionTree t = fit_tree(ds, 4);
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    Vector x = ds.features.row(r).transpose();
    int node = 0;
    for (int j = 0;; ++j) {
      Decision d = tree_decision(t, x, j);
      if (d == Decision::Exhausted) break;
      const TreeNode& cur = t.nodes[static_cast<std::size_t>(node)];
      node = d == Decision::Left ? *cur.left : *cur.right;
    }
    REQUIRE(node == leaf_of(t, x));
    std::vector<int> path = path_of(t, x);
    REQUIRE(!path.empty());
    CHECK(path.front() == 0);
    CHECK(path.back() == node);
  }
}

TEST_CASE("path encodings weight visited nodes by inverse depth", "[tree]") {
  Dataset pure;
  pure.features.resize(2, 1);
  pure.features << 0.0, 1.0;
  pure.labels = {1, 1};
  pure.class_count = 2;
  pure.feature_names = {"x"};
  DecisionTree root_only = fit_tree(pure, 3);
  Vector x(1);
  x << 0.3;
  PathEncoding enc = encode_path(root_only, x);
  REQUIRE(enc.values.size() == 1);
  CHECK(enc.values(0) == 1.0);

  DecisionTree stump = fit_tree(two_point_stump_data(), 1);
  PathEncoding left = encode_path(stump, x);  // 0.3 routes left
  REQUIRE(left.values.size() == 3);
  CHECK(left.values(0) == 1.0);
  CHECK(left.values(1) == 0.5);
  CHECK(left.values(2) == 0.0);

  Vector x2(1);
  x2 << 0.4;
  PathEncoding left2 = encode_path(stump, x2);
  CHECK((left.values - left2.values).cwiseAbs().maxCoeff() == 0.0);

  // nonzero count equals path length (leaf depth + 1)
  Vector hi(1);
  hi << 2.0;
  PathEncoding right = encode_path(stump, hi);
  CHECK((right.values.array() != 0.0).count() == 2);
}

TEST_CASE("per-depth label entropy matches hand values and decays", "[tree]") {
  // a root-only tree carries the full label entropy of a 3:1 dataset
  Dataset ds;
  ds.features.resize(4, 1);
  ds.features << 0.0, 1.0, 2.0, 3.0;
  ds.labels = {0, 0, 0, 1};
  ds.class_count = 2;
  ds.feature_names = {"x"};
  DecisionTree root_only = fit_tree(ds, 0);
  auto curve = level_entropy(root_only, ds);
  REQUIRE(curve.size() == 1);
  CHECK_THAT(curve[0], Catch::Matchers::WithinAbs(0.8112781244591328, 1e-12));

  // a separating tree ends at zero entropy, never increasing on the way
  Dataset blobs = make_named_blobs("4_corners", 200, 1);
  DecisionTree t = fit_tree(blobs, 6);
  auto levels = level_entropy(t, blobs);
  REQUIRE(levels.size() == static_cast<std::size_t>(t.max_depth) + 1);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    CHECK(levels[i] >= 0.0);
    CHECK(levels[i] <= 1.0);
    if (i > 0) CHECK(levels[i] <= levels[i - 1] + 1e-12);
  }
  CHECK(levels.back() == 0.0);

  Dataset single = ds;
  single.class_count = 1;
  single.labels = {0, 0, 0, 0};
  DecisionTree single_tree = fit_tree(single, 0);
  CHECK_THROWS(level_entropy(single_tree, single));
}

TEST_CASE("node prototypes average the rows routed through the node", "[tree]") {
  Dataset ds;
  ds.features.resize(2, 2);
  ds.features << 0.0, 0.0, 2.0, 4.0;
  ds.labels = {0, 0};
  ds.class_count = 2;
  ds.feature_names = {"a", "b"};
  DecisionTree root_only = fit_tree(ds, 2);  // pure -> single node
  Vector proto = node_prototype(root_only, ds, 0);
  CHECK(proto(0) == 1.0);
  CHECK(proto(1) == 2.0);

  Dataset stump_data = two_point_stump_data();
  DecisionTree stump = fit_tree(stump_data, 1);
  Vector left = node_prototype(stump, stump_data, *stump.nodes[0].left);
  REQUIRE(left.size() == 1);
  CHECK(left(0) == 0.0);  // singleton leaf prototype is the sample itself
}

TEST_CASE("equally good splits break ties toward the lowest feature", "[tree]") {
  Dataset ds;
  ds.features.resize(4, 2);
  // feature 1 duplicates feature 0; both separate perfectly
  ds.features << 0.0, 0.0, 0.2, 0.2, 1.0, 1.0, 1.2, 1.2;
  ds.labels = {0, 0, 1, 1};
  ds.class_count = 2;
  ds.feature_names = {"a", "b"};
  DecisionTree t = fit_tree(ds, 1);
  REQUIRE(t.nodes[0].split.has_value());
  CHECK(t.nodes[0].split->feature == 0);
  CHECK(t.nodes[0].split->threshold == 0.6);
}

TEST_CASE("refitting the same data reproduces the same tree", "[tree]") {
  Dataset ds = make_named_blobs("8_gaussians", 160, 9);
  DecisionTree a = fit_tree(ds, 7);
  DecisionTree b = fit_tree(ds, 7);
  CHECK(tree_to_json(a).dump() == tree_to_json(b).dump());
}

TEST_CASE("trees survive a JSON round-trip", "[tree]") {
  Dataset ds = make_named_blobs("4_corners", 120, 2);
  DecisionTree t = fit_tree(ds, 5);
  DecisionTree back = tree_from_json(tree_to_json(t));
  REQUIRE(back.nodes.size() == t.nodes.size());
  CHECK(back.max_depth == t.max_depth);
  CHECK(back.class_count == t.class_count);
  CHECK(back.feature_count == t.feature_count);
  CHECK(tree_to_json(back).dump() == tree_to_json(t).dump());
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    CHECK(predict(back, ds.features.row(r)).label ==
          predict(t, ds.features.row(r)).label);
  }
}

TEST_CASE("fit rejects degenerate arguments", "[tree]") {
  Dataset ds = two_point_stump_data();
  CHECK_THROWS(fit_tree(ds, -1));
  Dataset empty;
  empty.features.resize(0, 1);
  empty.class_count = 2;
  CHECK_THROWS(fit_tree(empty, 1));
}
