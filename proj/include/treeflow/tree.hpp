#pragma once
// CART decision trees plus the per-level views other modules build on:
// root-to-leaf path encodings, level decisions, per-depth entropy curves,
// and node prototypes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeflow/dataset.hpp"
#include "treeflow/linalg.hpp"
#include "treeflow/rng.hpp"

namespace treeflow {

struct TreeSplit {
  int feature = -1;
  double threshold = 0.0;
};

struct TreeNode {
  int id = 0;
  int depth = 0;                    // root = 0
  std::optional<TreeSplit> split;   // present iff children present
  std::optional<int> left;
  std::optional<int> right;
  std::vector<std::int64_t> class_counts;
  int prediction = 0;               // argmax of class_counts, ties -> lowest id

  bool is_leaf() const { return !split.has_value(); }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // indexed by id; id 0 = root; BFS order
  int max_depth = 0;            // deepest node actually present
  int class_count = 0;
  int feature_count = 0;

  std::size_t node_count() const { return nodes.size(); }
};

// Sparse-by-construction conditioning vector: values[id] = 1/(depth+1) along
// one root-to-leaf path, 0 elsewhere.
struct PathEncoding {
  Vector values;
};

// Per-level decision when replaying a sample's path.
enum class Decision { Left = 0, Right = 1, Exhausted = 2 };

namespace detail {

inline int argmax_counts(const std::vector<std::int64_t>& counts) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(counts.size()); ++k) {
    if (counts[static_cast<std::size_t>(k)] > counts[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

// Greedy CART split search over the rows of one node.
// Returns the (feature, threshold) minimizing the weighted Gini impurity of
// the children, or nullopt when no candidate threshold exists.  Candidates
// that leave impurity unchanged are allowed: symmetric layouts (XOR-style)
// have no impurity-reducing first split yet become separable one level down.
// `feature_pool` limits the candidate features (forest use); empty = all.
struct BestSplit {
  int feature = -1;
  double threshold = 0.0;
  double child_impurity = std::numeric_limits<double>::infinity();
};

inline std::optional<BestSplit> find_gini_split(
    const Matrix& features, const std::vector<int>& labels, int class_count,
    const std::vector<std::size_t>& rows, const std::vector<int>& feature_pool) {
  const std::size_t n = rows.size();
  std::vector<std::int64_t> total(static_cast<std::size_t>(class_count), 0);
  for (std::size_t r : rows) ++total[static_cast<std::size_t>(labels[r])];

  BestSplit best;
  std::vector<std::pair<double, int>> column(n);  // (value, label)
  std::vector<std::int64_t> left_counts(static_cast<std::size_t>(class_count));
  for (int f : feature_pool) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = {features(static_cast<Eigen::Index>(rows[i]), f), labels[rows[i]]};
    }
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::fill(left_counts.begin(), left_counts.end(), 0);
    std::size_t n_left = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++left_counts[static_cast<std::size_t>(column[i].second)];
      ++n_left;
      if (column[i].first == column[i + 1].first) continue;
      const std::size_t n_right = n - n_left;
      double gini_l = 1.0, gini_r = 1.0;
      for (int k = 0; k < class_count; ++k) {
        const double cl = static_cast<double>(left_counts[static_cast<std::size_t>(k)]);
        const double cr = static_cast<double>(total[static_cast<std::size_t>(k)]) - cl;
        gini_l -= (cl / static_cast<double>(n_left)) * (cl / static_cast<double>(n_left));
        gini_r -= (cr / static_cast<double>(n_right)) * (cr / static_cast<double>(n_right));
      }
      const double weighted =
          (static_cast<double>(n_left) * gini_l + static_cast<double>(n_right) * gini_r) /
          static_cast<double>(n);
      // Strictly-better keeps the lowest feature index / lowest threshold on
      // exact ties because candidates are scanned in increasing order.
      if (weighted < best.child_impurity) {
        best.feature = f;
        best.threshold = 0.5 * (column[i].first + column[i + 1].first);
        best.child_impurity = weighted;
      }
    }
  }
  if (best.feature < 0) return std::nullopt;
  return best;
}

struct PendingNode {
  std::vector<std::size_t> rows;
  int depth = 0;
  int parent = -1;
  bool is_left = false;
};

}  // namespace detail

// Greedy CART fit.  `feature_rng`/`mtry` enable per-split feature subsampling
// for forests; the default (mtry = 0) considers every feature.
inline DecisionTree fit_tree_on_rows(const Matrix& features,
                                     const std::vector<int>& labels,
                                     int class_count,
                                     std::vector<std::size_t> rows, int max_depth,
                                     int min_samples_split, Rng* feature_rng = nullptr,
                                     int mtry = 0) {
  if (rows.empty()) throw std::runtime_error("fit_tree: empty dataset");
  if (max_depth < 0) throw std::runtime_error("fit_tree: max_depth must be >= 0");
  if (min_samples_split < 2) throw std::runtime_error("fit_tree: min_samples_split must be >= 2");
  const int d = static_cast<int>(features.cols());

  DecisionTree tree;
  tree.class_count = class_count;
  tree.feature_count = d;

  std::vector<int> all_features(static_cast<std::size_t>(d));
  for (int f = 0; f < d; ++f) all_features[static_cast<std::size_t>(f)] = f;

  // FIFO processing assigns ids in BFS order directly.
  std::vector<detail::PendingNode> queue;
  queue.push_back({std::move(rows), 0, -1, false});
  for (std::size_t q = 0; q < queue.size(); ++q) {
    detail::PendingNode item = std::move(queue[q]);
    TreeNode node;
    node.id = static_cast<int>(tree.nodes.size());
    node.depth = item.depth;
    node.class_counts.assign(static_cast<std::size_t>(class_count), 0);
    for (std::size_t r : item.rows) ++node.class_counts[static_cast<std::size_t>(labels[r])];
    node.prediction = detail::argmax_counts(node.class_counts);
    if (item.parent >= 0) {
      auto& parent = tree.nodes[static_cast<std::size_t>(item.parent)];
      (item.is_left ? parent.left : parent.right) = node.id;
    }
    tree.max_depth = std::max(tree.max_depth, node.depth);

    bool pure = false;
    for (std::int64_t c : node.class_counts) {
      if (c == static_cast<std::int64_t>(item.rows.size())) pure = true;
    }
    std::optional<detail::BestSplit> split;
    if (!pure && item.depth < max_depth &&
        item.rows.size() >= static_cast<std::size_t>(min_samples_split)) {
      std::vector<int> pool = all_features;
      if (feature_rng != nullptr && mtry > 0 && mtry < d) {
        // Partial Fisher-Yates, then sorted so candidate order stays
        // lowest-feature-first for tie-breaking.
        for (int i = 0; i < mtry; ++i) {
          const int j = i + static_cast<int>(feature_rng->uniform_index(
                                static_cast<std::uint64_t>(d - i)));
          std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(mtry));
        std::sort(pool.begin(), pool.end());
      }
      split = detail::find_gini_split(features, labels, class_count, item.rows, pool);
    }
    if (split.has_value()) {
      node.split = TreeSplit{split->feature, split->threshold};
      std::vector<std::size_t> left_rows, right_rows;
      for (std::size_t r : item.rows) {
        if (features(static_cast<Eigen::Index>(r), split->feature) <= split->threshold) {
          left_rows.push_back(r);
        } else {
          right_rows.push_back(r);
        }
      }
      tree.nodes.push_back(std::move(node));
      queue.push_back({std::move(left_rows), item.depth + 1, tree.nodes.back().id, true});
      queue.push_back({std::move(right_rows), item.depth + 1, tree.nodes.back().id, false});
    } else {
      tree.nodes.push_back(std::move(node));
    }
  }
  return tree;
}

inline DecisionTree fit_tree(const Dataset& ds, int max_depth,
                             int min_samples_split = 2) {
  std::vector<std::size_t> rows(ds.n());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return fit_tree_on_rows(ds.features, ds.labels, ds.class_count, std::move(rows),
                          max_depth, min_samples_split);
}

// Leaf reached by descending with "go left iff x[feature] <= threshold".
inline int leaf_of(const DecisionTree& tree, const Eigen::Ref<const Vector>& x) {
  if (x.size() != tree.feature_count) {
    throw std::runtime_error("predict: input has " + std::to_string(x.size()) +
                             " features, tree expects " +
                             std::to_string(tree.feature_count));
  }
  int id = 0;
  while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    id = (x(node.split->feature) <= node.split->threshold) ? *node.left : *node.right;
  }
  return id;
}

struct TreePrediction {
  int label = 0;
  Vector distribution;
};

inline TreePrediction predict(const DecisionTree& tree,
                              const Eigen::Ref<const Vector>& x) {
  const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(leaf_of(tree, x))];
  TreePrediction out;
  out.label = leaf.prediction;
  out.distribution.resize(tree.class_count);
  std::int64_t total = 0;
  for (std::int64_t c : leaf.class_counts) total += c;
  for (int k = 0; k < tree.class_count; ++k) {
    out.distribution(k) =
        static_cast<double>(leaf.class_counts[static_cast<std::size_t>(k)]) /
        static_cast<double>(total);
  }
  return out;
}

// Node ids along x's root-to-leaf path, root first.
inline std::vector<int> path_of(const DecisionTree& tree,
                                const Eigen::Ref<const Vector>& x) {
  if (x.size() != tree.feature_count) {
    throw std::runtime_error("path_of: dimension mismatch");
  }
  std::vector<int> path{0};
  while (!tree.nodes[static_cast<std::size_t>(path.back())].is_leaf()) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(path.back())];
    path.push_back(x(node.split->feature) <= node.split->threshold ? *node.left
                                                                   : *node.right);
  }
  return path;
}

// Branch taken at depth j on x's path; Exhausted once a leaf sits at or
// before depth j (so any j at or past the leaf level is answerable).
inline Decision tree_decision(const DecisionTree& tree,
                              const Eigen::Ref<const Vector>& x, int j) {
  if (j < 0) throw std::runtime_error("tree_decision: negative level");
  const std::vector<int> path = path_of(tree, x);
  if (static_cast<std::size_t>(j) >= path.size()) return Decision::Exhausted;
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(path[static_cast<std::size_t>(j)])];
  if (node.is_leaf()) return Decision::Exhausted;
  return x(node.split->feature) <= node.split->threshold ? Decision::Left
                                                         : Decision::Right;
}

inline PathEncoding encode_path(const DecisionTree& tree,
                                const Eigen::Ref<const Vector>& x) {
  PathEncoding enc;
  enc.values = Vector::Zero(static_cast<Eigen::Index>(tree.node_count()));
  for (int id : path_of(tree, x)) {
    enc.values(id) = 1.0 / (tree.nodes[static_cast<std::size_t>(id)].depth + 1.0);
  }
  return enc;
}

// Normalized weighted Shannon entropy per depth.  Samples whose leaf sits
// above depth d stay grouped in that leaf, so the curve is defined for all
// depths 0..max_depth and is non-increasing in depth.
inline std::vector<double> level_entropy(const DecisionTree& tree, const Dataset& ds) {
  if (ds.n() == 0) throw std::runtime_error("level_entropy: empty dataset");
  if (tree.class_count < 2) {
    throw std::runtime_error("level_entropy: needs >= 2 classes for normalization");
  }
  const std::size_t n = ds.n();
  const int depths = tree.max_depth + 1;
  // counts[depth][node][class]
  std::vector<std::map<int, std::vector<std::int64_t>>> counts(
      static_cast<std::size_t>(depths));
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<int> path = path_of(tree, ds.features.row(static_cast<Eigen::Index>(i)));
    for (int d = 0; d < depths; ++d) {
      const int node = path[std::min<std::size_t>(static_cast<std::size_t>(d), path.size() - 1)];
      auto& c = counts[static_cast<std::size_t>(d)][node];
      if (c.empty()) c.assign(static_cast<std::size_t>(tree.class_count), 0);
      ++c[static_cast<std::size_t>(ds.labels[i])];
    }
  }
  const double norm = std::log2(static_cast<double>(tree.class_count));
  std::vector<double> curve(static_cast<std::size_t>(depths), 0.0);
  for (int d = 0; d < depths; ++d) {
    double total = 0.0;
    for (const auto& [node, c] : counts[static_cast<std::size_t>(d)]) {
      std::int64_t n_node = 0;
      for (std::int64_t v : c) n_node += v;
      double h = 0.0;
      for (std::int64_t v : c) {
        if (v == 0) continue;
        const double p = static_cast<double>(v) / static_cast<double>(n_node);
        h -= p * std::log2(p);
      }
      total += (static_cast<double>(n_node) / static_cast<double>(n)) * h / norm;
    }
    curve[static_cast<std::size_t>(d)] = total;
  }
  return curve;
}

// Feature-wise mean of the training samples routed through `node`.
inline Vector node_prototype(const DecisionTree& tree, const Dataset& ds, int node) {
  Vector sum = Vector::Zero(ds.features.cols());
  std::int64_t count = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (int id : path_of(tree, ds.features.row(static_cast<Eigen::Index>(i)))) {
      if (id == node) {
        sum += ds.features.row(static_cast<Eigen::Index>(i)).transpose();
        ++count;
        break;
      }
    }
  }
  if (count == 0) throw std::runtime_error("node_prototype: no samples reach node");
  return sum / static_cast<double>(count);
}

inline nlohmann::json tree_to_json(const DecisionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& n : tree.nodes) {
    nlohmann::json jn;
    jn["id"] = n.id;
    jn["depth"] = n.depth;
    jn["feature"] = n.split ? nlohmann::json(n.split->feature) : nlohmann::json();
    jn["threshold"] = n.split ? nlohmann::json(n.split->threshold) : nlohmann::json();
    jn["left"] = n.left ? nlohmann::json(*n.left) : nlohmann::json();
    jn["right"] = n.right ? nlohmann::json(*n.right) : nlohmann::json();
    jn["counts"] = n.class_counts;
    jn["prediction"] = n.prediction;
    nodes.push_back(std::move(jn));
  }
  return nlohmann::json{{"nodes", std::move(nodes)},
                        {"max_depth", tree.max_depth},
                        {"class_count", tree.class_count},
                        {"feature_count", tree.feature_count}};
}

inline DecisionTree tree_from_json(const nlohmann::json& j) {
  DecisionTree tree;
  tree.max_depth = j.at("max_depth").get<int>();
  tree.class_count = j.at("class_count").get<int>();
  tree.feature_count = j.at("feature_count").get<int>();
  for (const auto& jn : j.at("nodes")) {
    TreeNode n;
    n.id = jn.at("id").get<int>();
    n.depth = jn.at("depth").get<int>();
    if (!jn.at("feature").is_null()) {
      n.split = TreeSplit{jn.at("feature").get<int>(), jn.at("threshold").get<double>()};
      n.left = jn.at("left").get<int>();
      n.right = jn.at("right").get<int>();
    }
    n.class_counts = jn.at("counts").get<std::vector<std::int64_t>>();
    n.prediction = jn.at("prediction").get<int>();
    tree.nodes.push_back(std::move(n));
  }
  return tree;
}

}  // namespace treeflow
