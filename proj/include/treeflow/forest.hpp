#pragma once
// Bagged forest of CART trees: bootstrap resamples, per-split feature
// subsampling, majority vote.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "treeflow/dataset.hpp"
#include "treeflow/tree.hpp"

namespace treeflow {

struct Forest {
  std::vector<DecisionTree> trees;
  std::uint64_t seed = 0;
};

// Internal knobs exposed so tests can disable bagging and feature sampling
// and compare a one-tree forest against fit_tree directly.
struct ForestOptions {
  bool bootstrap = true;
  int mtry = 0;  // 0 = ceil(sqrt(d))
  int min_samples_split = 2;
};

inline Forest fit_forest(const Dataset& ds, int n_trees, int max_depth,
                         std::uint64_t seed, ForestOptions opt = {}) {
  if (ds.n() == 0) throw std::runtime_error("fit_forest: empty dataset");
  if (n_trees < 1) throw std::runtime_error("fit_forest: n_trees must be >= 1");
  const int d = static_cast<int>(ds.dim());
  const int mtry = opt.mtry > 0
                       ? opt.mtry
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));

  Forest forest;
  forest.seed = seed;
  Rng root = Rng::stream(seed, "tree/fit_forest");
  for (int t = 0; t < n_trees; ++t) {
    Rng tree_rng = root.substream(static_cast<std::uint64_t>(t));
    std::vector<std::size_t> rows(ds.n());
    if (opt.bootstrap) {
      for (std::size_t i = 0; i < ds.n(); ++i) {
        rows[i] = static_cast<std::size_t>(tree_rng.uniform_index(ds.n()));
      }
    } else {
      for (std::size_t i = 0; i < ds.n(); ++i) rows[i] = i;
    }
    forest.trees.push_back(fit_tree_on_rows(ds.features, ds.labels, ds.class_count,
                                            std::move(rows), max_depth,
                                            opt.min_samples_split, &tree_rng, mtry));
  }
  return forest;
}

// Per-class vote counts over trees.
inline std::vector<int> forest_votes(const Forest& forest,
                                     const Eigen::Ref<const Vector>& x) {
  std::vector<int> votes(static_cast<std::size_t>(forest.trees.front().class_count), 0);
  for (const DecisionTree& tree : forest.trees) {
    ++votes[static_cast<std::size_t>(
        tree.nodes[static_cast<std::size_t>(leaf_of(tree, x))].prediction)];
  }
  return votes;
}

// Majority vote; ties resolved toward the lowest class id.
inline int forest_predict(const Forest& forest, const Eigen::Ref<const Vector>& x) {
  const std::vector<int> votes = forest_votes(forest, x);
  int best = 0;
  for (int k = 1; k < static_cast<int>(votes.size()); ++k) {
    if (votes[static_cast<std::size_t>(k)] > votes[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

inline std::vector<int> forest_predict_all(const Forest& forest, const Matrix& xs) {
  std::vector<int> out(static_cast<std::size_t>(xs.rows()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = forest_predict(forest, xs.row(i));
  }
  return out;
}

}  // namespace treeflow
