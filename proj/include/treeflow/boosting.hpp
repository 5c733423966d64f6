#pragma once
// Squared-error gradient boosting over depth-limited regression trees, with
// two training-time traces: the mean-squared-residual curve and the cell
// count of the net partition induced by all stages so far.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "treeflow/linalg.hpp"
#include "treeflow/tree.hpp"

namespace treeflow {

struct RegressionNode {
  int id = 0;
  int depth = 0;
  std::optional<TreeSplit> split;
  std::optional<int> left;
  std::optional<int> right;
  double value = 0.0;  // mean target of the node's training rows
  std::int64_t count = 0;
};

struct RegressionTree {
  std::vector<RegressionNode> nodes;  // BFS ids, root = 0
  int max_depth = 0;
  int feature_count = 0;
};

namespace detail {

// Variance-reduction split: minimizes total child SSE via prefix sums.
inline std::optional<BestSplit> find_variance_split(
    const Matrix& features, const Vector& targets,
    const std::vector<std::size_t>& rows) {
  const std::size_t n = rows.size();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t r : rows) {
    const double t = targets(static_cast<Eigen::Index>(r));
    sum += t;
    sum_sq += t * t;
  }
  const double parent_sse = sum_sq - sum * sum / static_cast<double>(n);

  BestSplit best;
  std::vector<std::pair<double, double>> column(n);  // (feature value, target)
  for (int f = 0; f < static_cast<int>(features.cols()); ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = {features(static_cast<Eigen::Index>(rows[i]), f),
                   targets(static_cast<Eigen::Index>(rows[i]))};
    }
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = 0.0, left_sq = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += column[i].second;
      left_sq += column[i].second * column[i].second;
      if (column[i].first == column[i + 1].first) continue;
      const double nl = static_cast<double>(i + 1);
      const double nr = static_cast<double>(n - i - 1);
      const double right_sum = sum - left_sum;
      const double right_sq = sum_sq - left_sq;
      const double sse = (left_sq - left_sum * left_sum / nl) +
                         (right_sq - right_sum * right_sum / nr);
      if (sse < best.child_impurity) {
        best.feature = f;
        best.threshold = 0.5 * (column[i].first + column[i + 1].first);
        best.child_impurity = sse;
      }
    }
  }
  if (best.feature < 0 ||
      !(best.child_impurity < parent_sse - 1e-12 * (1.0 + std::abs(parent_sse)))) {
    return std::nullopt;
  }
  return best;
}

}  // namespace detail

inline RegressionTree fit_regression_tree(const Matrix& features, const Vector& targets,
                                          int max_depth, int min_samples_split = 2) {
  if (features.rows() == 0) throw std::runtime_error("fit_regression_tree: empty data");
  RegressionTree tree;
  tree.feature_count = static_cast<int>(features.cols());

  std::vector<detail::PendingNode> queue;
  std::vector<std::size_t> all(static_cast<std::size_t>(features.rows()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  queue.push_back({std::move(all), 0, -1, false});
  for (std::size_t q = 0; q < queue.size(); ++q) {
    detail::PendingNode item = std::move(queue[q]);
    RegressionNode node;
    node.id = static_cast<int>(tree.nodes.size());
    node.depth = item.depth;
    node.count = static_cast<std::int64_t>(item.rows.size());
    double sum = 0.0;
    for (std::size_t r : item.rows) sum += targets(static_cast<Eigen::Index>(r));
    node.value = sum / static_cast<double>(item.rows.size());
    if (item.parent >= 0) {
      auto& parent = tree.nodes[static_cast<std::size_t>(item.parent)];
      (item.is_left ? parent.left : parent.right) = node.id;
    }
    tree.max_depth = std::max(tree.max_depth, node.depth);

    std::optional<detail::BestSplit> split;
    if (item.depth < max_depth &&
        item.rows.size() >= static_cast<std::size_t>(min_samples_split)) {
      split = detail::find_variance_split(features, targets, item.rows);
    }
    if (split.has_value()) {
      node.split = TreeSplit{split->feature, split->threshold};
      std::vector<std::size_t> left_rows, right_rows;
      for (std::size_t r : item.rows) {
        (features(static_cast<Eigen::Index>(r), split->feature) <= split->threshold
             ? left_rows
             : right_rows)
            .push_back(r);
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

inline int regression_leaf_of(const RegressionTree& tree,
                              const Eigen::Ref<const Vector>& x) {
  int id = 0;
  while (tree.nodes[static_cast<std::size_t>(id)].split.has_value()) {
    const RegressionNode& node = tree.nodes[static_cast<std::size_t>(id)];
    id = (x(node.split->feature) <= node.split->threshold) ? *node.left : *node.right;
  }
  return id;
}

inline double regression_predict(const RegressionTree& tree,
                                 const Eigen::Ref<const Vector>& x) {
  return tree.nodes[static_cast<std::size_t>(regression_leaf_of(tree, x))].value;
}

struct BoostedEnsemble {
  double f0 = 0.0;
  std::vector<RegressionTree> stages;
  double eta = 0.1;
  std::vector<double> dgtsm_trace;    // mean squared residual after each stage
  std::vector<std::int64_t> partition_trace;  // net-partition cell count per stage
};

inline double boosted_predict(const BoostedEnsemble& model,
                              const Eigen::Ref<const Vector>& x) {
  double f = model.f0;
  for (const RegressionTree& h : model.stages) f += model.eta * regression_predict(h, x);
  return f;
}

// Stage-wise squared-error boosting.  Stops early (truncating all traces)
// once training residuals vanish; the per-stage net partition is measured as
// the number of distinct joint leaf-assignment tuples on the training rows.
inline BoostedEnsemble fit_boosted(const Matrix& features, const Vector& targets,
                                   int stages, double eta, int weak_depth,
                                   int min_samples_split = 2) {
  if (features.rows() == 0) throw std::runtime_error("fit_boosted: empty data");
  if (stages < 1) throw std::runtime_error("fit_boosted: stages must be >= 1");
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw std::runtime_error("fit_boosted: eta must lie in (0,1]");
  }
  const Eigen::Index n = features.rows();

  BoostedEnsemble model;
  model.eta = eta;
  model.f0 = targets.mean();

  Vector current = Vector::Constant(n, model.f0);
  // cell[i] identifies the joint leaf tuple of row i across fitted stages.
  std::vector<std::int64_t> cell(static_cast<std::size_t>(n), 0);
  std::int64_t cell_count = 1;

  for (int m = 0; m < stages; ++m) {
    const Vector residual = targets - current;
    const double mean_sq = residual.squaredNorm() / static_cast<double>(n);
    if (mean_sq <= 1e-20) break;  // nothing left to fit; truncate traces

    RegressionTree h = fit_regression_tree(features, residual, weak_depth,
                                           min_samples_split);
    for (Eigen::Index i = 0; i < n; ++i) {
      current(i) += eta * regression_predict(h, features.row(i));
    }

    std::map<std::pair<std::int64_t, int>, std::int64_t> next_ids;
    std::int64_t next_count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int leaf = regression_leaf_of(h, features.row(i));
      auto key = std::make_pair(cell[static_cast<std::size_t>(i)], leaf);
      auto it = next_ids.find(key);
      if (it == next_ids.end()) it = next_ids.emplace(key, next_count++).first;
      cell[static_cast<std::size_t>(i)] = it->second;
    }
    cell_count = next_count;

    model.stages.push_back(std::move(h));
    model.dgtsm_trace.push_back((targets - current).squaredNorm() /
                                static_cast<double>(n));
    model.partition_trace.push_back(cell_count);
  }
  return model;
}

}  // namespace treeflow
