#pragma once
// Tree-conditioned conditional flow matching: a velocity field over
// (x, t, path-encoding, label embedding) trained on linear interpolation
// paths, plus partition-targeted Euler generation.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeflow/dataset.hpp"
#include "treeflow/linalg.hpp"
#include "treeflow/nn.hpp"
#include "treeflow/rng.hpp"
#include "treeflow/tree.hpp"

namespace treeflow {

struct TreeFlowConfig {
  int tree_depth = 10;
  int steps = 1000;
  int batch = 128;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int euler_steps = 50;
  std::uint64_t seed = 0;
  int label_embed_dim = 16;
  std::vector<int> hidden = {512, 512};
  bool per_example_t = false;      // ablation: one t per example instead of per batch
  bool allow_single_class = false;
};

struct VelocityModel {
  MlpParams params;
  DecisionTree tree;  // conditioning tree; path-encoding width = node count
};

struct TreeFlowTrainResult {
  VelocityModel model;
  std::vector<double> loss_trace;  // per-step training loss
};

namespace detail {

inline MlpSpec velocity_spec(int data_dim, int node_count, int class_count,
                             const TreeFlowConfig& cfg) {
  MlpSpec spec;
  spec.input_dim = data_dim + 1 + node_count;  // x, t, path encoding
  spec.hidden = cfg.hidden;
  spec.activation = Activation::SiLU;
  spec.norm = NormKind::LayerNorm;
  spec.output_dim = data_dim;
  spec.embeddings = {{class_count, cfg.label_embed_dim}};
  return spec;
}

// Assembles the continuous input block [x | t | p].
inline Matrix velocity_input(const Matrix& x, const Vector& t, const Matrix& paths) {
  Matrix input(x.rows(), x.cols() + 1 + paths.cols());
  input.leftCols(x.cols()) = x;
  input.col(x.cols()) = t;
  input.rightCols(paths.cols()) = paths;
  return input;
}

}  // namespace detail

// Batched velocity evaluation (eval mode).
inline Matrix velocity_eval(VelocityModel& model, const Matrix& x, const Vector& t,
                            const Matrix& paths, const std::vector<int>& labels) {
  return mlp_forward(model.params, detail::velocity_input(x, t, paths), {labels},
                     Mode::Eval)
      .output;
}

// Mean over the batch of squared Euclidean error against v* = x_data - x_noise
// at x_t = t x_data + (1-t) x_noise.  Pure given its inputs.
inline double cfm_loss_batch(VelocityModel& model, const Matrix& x_data,
                             const Matrix& paths, const std::vector<int>& labels,
                             const Vector& t, const Matrix& noise) {
  Matrix x_t = (x_data.array().colwise() * t.array() +
                noise.array().colwise() * (1.0 - t.array()))
                   .matrix();
  Matrix target = x_data - noise;
  Matrix v = velocity_eval(model, x_t, t, paths, labels);
  return (v - target).squaredNorm() / static_cast<double>(x_data.rows());
}

// Conditional flow matching training (one shared t per batch by default).
inline TreeFlowTrainResult train_treeflow(const Dataset& ds, const TreeFlowConfig& cfg) {
  if (ds.class_count < 2 && !cfg.allow_single_class) {
    throw std::runtime_error(
        "train_treeflow: dataset has a single class; pass the single-class flag");
  }
  const Eigen::Index d = ds.features.cols();
  const Eigen::Index n = static_cast<Eigen::Index>(ds.n());

  TreeFlowTrainResult out;
  out.model.tree = fit_tree(ds, cfg.tree_depth);
  const Eigen::Index node_count = static_cast<Eigen::Index>(out.model.tree.node_count());

  // Precompute every row's path encoding once.
  Matrix all_paths(n, node_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    all_paths.row(i) = encode_path(out.model.tree, ds.features.row(i)).values.transpose();
  }

  out.model.params = mlp_init(
      detail::velocity_spec(static_cast<int>(d), static_cast<int>(node_count),
                            ds.class_count, cfg),
      cfg.seed);
  AdamState adam = make_adam(out.model.params, cfg.lr, cfg.weight_decay);
  Rng rng = Rng::stream(cfg.seed, "treeflow/train");

  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch, n);
  Matrix x_data(bs, d), noise(bs, d), paths(bs, node_count);
  std::vector<int> labels(static_cast<std::size_t>(bs));
  Vector t(bs);

  for (int step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index r = 0; r < bs; ++r) {
      const auto row = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      x_data.row(r) = ds.features.row(row);
      paths.row(r) = all_paths.row(row);
      labels[static_cast<std::size_t>(r)] = ds.labels[static_cast<std::size_t>(row)];
      for (Eigen::Index c = 0; c < d; ++c) noise(r, c) = rng.normal();
    }
    if (cfg.per_example_t) {
      for (Eigen::Index r = 0; r < bs; ++r) t(r) = rng.uniform();
    } else {
      t.setConstant(rng.uniform());
    }

    Matrix x_t = (x_data.array().colwise() * t.array() +
                  noise.array().colwise() * (1.0 - t.array()))
                     .matrix();
    Matrix target = x_data - noise;
    ForwardResult fr = mlp_forward(out.model.params,
                                   detail::velocity_input(x_t, t, paths), {labels},
                                   Mode::Train);
    Matrix diff = fr.output - target;
    const double loss = diff.squaredNorm() / static_cast<double>(bs);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train_treeflow: non-finite loss at step " +
                               std::to_string(step));
    }
    Matrix dout = (2.0 / static_cast<double>(bs)) * diff;
    MlpParams grads = mlp_backward(out.model.params, fr.cache, dout);
    adam_step(out.model.params, grads, adam);
    out.loss_trace.push_back(loss);
  }
  return out;
}

// Partition-targeted generation (standardized space).  Each sample draws a
// reference training row uniformly from the matching set, inherits its path
// encoding, and integrates the velocity field from noise with fixed-step
// Euler over t in [0, 1).
inline Matrix generate(VelocityModel& model, const Dataset& ds, int y_target,
                       std::optional<int> partition, int n_samples, int euler_steps,
                       std::uint64_t seed) {
  const Eigen::Index d = ds.features.cols();
  std::vector<Eigen::Index> matching;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.labels[i] != y_target) continue;
    if (partition.has_value() &&
        leaf_of(model.tree, ds.features.row(static_cast<Eigen::Index>(i))) != *partition) {
      continue;
    }
    matching.push_back(static_cast<Eigen::Index>(i));
  }
  if (matching.empty()) {
    throw std::runtime_error(
        "generate: no training rows match (label " + std::to_string(y_target) +
        (partition ? ", leaf " + std::to_string(*partition) : ", any leaf") + ")");
  }

  Rng rng = Rng::stream(seed, "treeflow/generate");
  const Eigen::Index node_count = static_cast<Eigen::Index>(model.tree.node_count());
  Matrix paths(n_samples, node_count);
  Matrix x(n_samples, d);
  std::vector<int> labels(static_cast<std::size_t>(n_samples), y_target);
  for (Eigen::Index s = 0; s < n_samples; ++s) {
    const Eigen::Index ref =
        matching[rng.uniform_index(static_cast<std::uint64_t>(matching.size()))];
    paths.row(s) = encode_path(model.tree, ds.features.row(ref)).values.transpose();
    for (Eigen::Index c = 0; c < d; ++c) x(s, c) = rng.normal();
  }

  const double dt = 1.0 / euler_steps;
  Vector t(n_samples);
  for (int k = 0; k < euler_steps; ++k) {
    t.setConstant(k * dt);
    x += velocity_eval(model, x, t, paths, labels) * dt;
  }
  return x;
}

}  // namespace treeflow
