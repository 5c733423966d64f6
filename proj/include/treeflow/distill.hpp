#pragma once
// Tree distillation: a forest oracle pseudo-labels the data, a base tree
// ("teacher") is fit on the pseudo-labels, and a level-conditioned split
// network ("student") learns the teacher's per-level decisions under a
// masked cross-entropy.  Inference replays the teacher's topology using the
// network's decisions only.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeflow/dataset.hpp"
#include "treeflow/forest.hpp"
#include "treeflow/linalg.hpp"
#include "treeflow/nn.hpp"
#include "treeflow/rng.hpp"
#include "treeflow/tree.hpp"

namespace treeflow {

struct DsmConfig {
  int oracle_trees = 100;
  int oracle_depth = 15;
  int teacher_depth = 15;
  int steps = 30000;
  int batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int level_embed_dim = 32;
  std::vector<int> hidden = {256, 256};
};

struct Teacher {
  Forest oracle;
  DecisionTree tree;
  std::vector<int> pseudo_labels;  // oracle predictions on the training rows
};

inline Teacher make_teacher(const Dataset& ds, const DsmConfig& cfg) {
  Teacher t;
  t.oracle = fit_forest(ds, cfg.oracle_trees, cfg.oracle_depth, cfg.seed);
  t.pseudo_labels = forest_predict_all(t.oracle, ds.features);
  t.tree = fit_tree_on_rows(ds.features, t.pseudo_labels, ds.class_count,
                            [&] {
                              std::vector<std::size_t> rows(ds.n());
                              for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
                              return rows;
                            }(),
                            cfg.teacher_depth, 2);
  return t;
}

struct SplitModel {
  MlpParams params;
  int levels = 0;  // embedding cardinality = teacher max_depth
};

struct SplitTrainResult {
  SplitModel model;
  std::vector<double> loss_trace;  // masked loss per step (0 for skipped steps)
};

namespace detail {

inline MlpSpec split_model_spec(int data_dim, int levels, const DsmConfig& cfg) {
  MlpSpec spec;
  spec.input_dim = data_dim;
  spec.hidden = cfg.hidden;
  spec.activation = Activation::ReLU;
  spec.norm = NormKind::BatchNorm;
  spec.output_dim = 2;  // Left / Right logits
  spec.embeddings = {{levels, cfg.level_embed_dim}};
  return spec;
}

// Decision at level j read off a precomputed root-to-leaf path.
inline Decision path_decision(const DecisionTree& tree, const std::vector<int>& path,
                              int j) {
  if (static_cast<std::size_t>(j) >= path.size()) return Decision::Exhausted;
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(path[static_cast<std::size_t>(j)])];
  if (node.is_leaf()) return Decision::Exhausted;
  return path[static_cast<std::size_t>(j) + 1] == *node.left ? Decision::Left
                                                             : Decision::Right;
}

}  // namespace detail

// Masked cross-entropy training over (row, level) pairs.  Levels are sampled
// uniformly from {0..D-1}; pairs whose teacher decision is Exhausted are
// masked out of the loss, and a fully-masked batch skips the update entirely
// (no optimizer step, no BatchNorm statistics update).
inline SplitTrainResult train_split_model(const Dataset& ds, const DecisionTree& teacher,
                                          const DsmConfig& cfg) {
  if (teacher.max_depth < 1) {
    throw std::runtime_error("train_split_model: teacher has no internal levels");
  }
  const Eigen::Index d = ds.features.cols();
  const Eigen::Index n = static_cast<Eigen::Index>(ds.n());
  const int levels = teacher.max_depth;

  SplitTrainResult out;
  out.model.levels = levels;
  out.model.params =
      mlp_init(detail::split_model_spec(static_cast<int>(d), levels, cfg), cfg.seed);
  AdamState adam = make_adam(out.model.params, cfg.lr);
  Rng rng = Rng::stream(cfg.seed, "dsmtree/train");

  // Precompute every row's path once; decisions become lookups.
  std::vector<std::vector<int>> paths;
  paths.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    paths.push_back(path_of(teacher, ds.features.row(i)));
  }

  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch, n);
  Matrix x(bs, d);
  std::vector<int> level_idx(static_cast<std::size_t>(bs));
  std::vector<int> target(static_cast<std::size_t>(bs));

  for (int step = 0; step < cfg.steps; ++step) {
    int unmasked = 0;
    for (Eigen::Index r = 0; r < bs; ++r) {
      const auto row = static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(levels)));
      x.row(r) = ds.features.row(static_cast<Eigen::Index>(row));
      level_idx[static_cast<std::size_t>(r)] = j;
      const Decision dec = detail::path_decision(teacher, paths[row], j);
      if (dec == Decision::Exhausted) {
        target[static_cast<std::size_t>(r)] = -1;
      } else {
        target[static_cast<std::size_t>(r)] = static_cast<int>(dec);
        ++unmasked;
      }
    }
    if (unmasked == 0) {
      out.loss_trace.push_back(0.0);  // fully masked: contributes zero, no update
      continue;
    }

    ForwardResult fr = mlp_forward(out.model.params, x, {level_idx}, Mode::Train);
    // Softmax cross-entropy averaged over unmasked pairs only.
    double loss = 0.0;
    Matrix dout = Matrix::Zero(bs, 2);
    for (Eigen::Index r = 0; r < bs; ++r) {
      const int y = target[static_cast<std::size_t>(r)];
      if (y < 0) continue;
      const double a = fr.output(r, 0);
      const double b = fr.output(r, 1);
      const double mx = std::max(a, b);
      const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
      loss += lse - fr.output(r, y);
      const double p0 = std::exp(a - lse);
      const double p1 = std::exp(b - lse);
      dout(r, 0) = (p0 - (y == 0 ? 1.0 : 0.0)) / unmasked;
      dout(r, 1) = (p1 - (y == 1 ? 1.0 : 0.0)) / unmasked;
    }
    loss /= unmasked;
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train_split_model: non-finite loss at step " +
                               std::to_string(step));
    }
    MlpParams grads = mlp_backward(out.model.params, fr.cache, dout);
    adam_step(out.model.params, grads, adam);
    out.loss_trace.push_back(loss);
  }
  return out;
}

// Per-level branch decisions for a batch (eval mode, running statistics).
inline std::vector<Decision> split_model_decide(SplitModel& model, const Matrix& x,
                                                int level) {
  std::vector<int> level_idx(static_cast<std::size_t>(x.rows()), level);
  Matrix logits = mlp_forward(model.params, x, {level_idx}, Mode::Eval).output;
  std::vector<Decision> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    // Argmax with exact comparison; tie goes Left.
    out[static_cast<std::size_t>(r)] =
        logits(r, 1) > logits(r, 0) ? Decision::Right : Decision::Left;
  }
  return out;
}

// Generic traversal: walks the teacher's topology taking branches from
// `decide(x, level)`; never reads split thresholds.  Returns the visited
// node sequence; the final node may be internal if the level budget ends.
inline std::vector<int> traverse_with(
    const DecisionTree& teacher, const Eigen::Ref<const Vector>& x,
    const std::function<Decision(const Eigen::Ref<const Vector>&, int)>& decide) {
  std::vector<int> visited{0};
  int level = 0;
  while (level < teacher.max_depth) {
    const TreeNode& node = teacher.nodes[static_cast<std::size_t>(visited.back())];
    if (node.is_leaf()) break;
    const Decision d = decide(x, level);
    visited.push_back(d == Decision::Left ? *node.left : *node.right);
    ++level;
  }
  return visited;
}

// Batched student inference over the teacher topology.
inline std::vector<int> infer_paths_batch(SplitModel& model, const DecisionTree& teacher,
                                          const Matrix& xs,
                                          std::vector<std::vector<int>>* out_paths = nullptr) {
  const Eigen::Index n = xs.rows();
  std::vector<int> node(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> paths(static_cast<std::size_t>(n), std::vector<int>{0});

  for (int level = 0; level < teacher.max_depth; ++level) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (!teacher.nodes[static_cast<std::size_t>(node[static_cast<std::size_t>(r)])].is_leaf()) {
        active.push_back(r);
      }
    }
    if (active.empty()) break;
    Matrix x(static_cast<Eigen::Index>(active.size()), xs.cols());
    for (std::size_t i = 0; i < active.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = xs.row(active[i]);
    }
    const std::vector<Decision> dec = split_model_decide(model, x, level);
    for (std::size_t i = 0; i < active.size(); ++i) {
      const auto r = static_cast<std::size_t>(active[i]);
      const TreeNode& cur = teacher.nodes[static_cast<std::size_t>(node[r])];
      node[r] = dec[i] == Decision::Left ? *cur.left : *cur.right;
      paths[r].push_back(node[r]);
    }
  }

  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    labels[r] = teacher.nodes[static_cast<std::size_t>(node[r])].prediction;
  }
  if (out_paths != nullptr) *out_paths = std::move(paths);
  return labels;
}

// Single-row student inference: class of the node reached by network-driven
// traversal (majority class when the final node is internal).
inline int infer(SplitModel& model, const DecisionTree& teacher,
                 const Eigen::Ref<const Vector>& x) {
  Matrix one(1, x.size());
  one.row(0) = x.transpose();
  return infer_paths_batch(model, teacher, one).front();
}

// Fraction of rows whose network-driven traversal visits exactly the
// teacher's own root-to-leaf path.
inline double path_agreement(SplitModel& model, const DecisionTree& teacher,
                             const Dataset& ds) {
  std::vector<std::vector<int>> student_paths;
  infer_paths_batch(model, teacher, ds.features, &student_paths);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (student_paths[i] == path_of(teacher, ds.features.row(static_cast<Eigen::Index>(i)))) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(ds.n());
}

}  // namespace treeflow
