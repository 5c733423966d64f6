#pragma once
// Minimal dense network with embeddings, LayerNorm/BatchNorm, explicit
// reverse-mode backprop, and Adam/AdamW.  Shared engine for the score net,
// the velocity field, and the split model.
//
// Layer scheme per hidden layer: linear -> norm -> activation; the output
// layer is linear.  All math is double precision.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "treeflow/linalg.hpp"
#include "treeflow/rng.hpp"

namespace treeflow {

enum class Activation { ReLU, SiLU };
enum class NormKind { None, LayerNorm, BatchNorm };
enum class Mode { Train, Eval };

struct EmbeddingSpec {
  int cardinality = 0;
  int dim = 0;
};

struct MlpSpec {
  int input_dim = 0;  // continuous features; embedding dims are appended
  std::vector<int> hidden;
  Activation activation = Activation::ReLU;
  NormKind norm = NormKind::None;
  int output_dim = 0;
  std::vector<EmbeddingSpec> embeddings;

  int embedded_dim() const {
    int d = 0;
    for (const auto& e : embeddings) d += e.dim;
    return d;
  }
  // Fan-in of the first linear layer.
  int total_input() const { return input_dim + embedded_dim(); }
};

struct MlpParams {
  MlpSpec spec;
  std::vector<Matrix> weights;  // [out x in] per linear layer (hidden + output)
  std::vector<Vector> biases;
  std::vector<Vector> norm_scale;   // per hidden layer when norm != None
  std::vector<Vector> norm_shift;
  std::vector<Vector> running_mean;  // BatchNorm only
  std::vector<Vector> running_var;
  std::vector<Matrix> embeddings;  // [cardinality x dim] tables
};

namespace detail {

enum class TensorKind { Weight, Bias, NormScale, NormShift, Embedding };

// Visits every trainable tensor in a fixed order shared by the optimizer,
// the gradient container, the serializer, and the gradient checker.
// Running statistics are state, not parameters, and are excluded.
template <typename Fn>
void for_each_tensor(MlpParams& p, Fn&& fn) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    fn("weight" + std::to_string(l), TensorKind::Weight, p.weights[l].data(),
       p.weights[l].size());
    fn("bias" + std::to_string(l), TensorKind::Bias, p.biases[l].data(),
       p.biases[l].size());
  }
  for (std::size_t l = 0; l < p.norm_scale.size(); ++l) {
    fn("norm_scale" + std::to_string(l), TensorKind::NormScale,
       p.norm_scale[l].data(), p.norm_scale[l].size());
    fn("norm_shift" + std::to_string(l), TensorKind::NormShift,
       p.norm_shift[l].data(), p.norm_shift[l].size());
  }
  for (std::size_t e = 0; e < p.embeddings.size(); ++e) {
    fn("embedding" + std::to_string(e), TensorKind::Embedding,
       p.embeddings[e].data(), p.embeddings[e].size());
  }
}

inline constexpr double kNormEps = 1e-5;

}  // namespace detail

// Glorot-uniform weights, zero biases, unit norm scales, zero shifts,
// normal(0, 0.02) embeddings.  Bitwise deterministic for a given seed.
inline MlpParams mlp_init(const MlpSpec& spec, std::uint64_t seed) {
  if (spec.input_dim < 0 || spec.output_dim < 1 || spec.total_input() < 1) {
    throw std::runtime_error("mlp_init: invalid spec dimensions");
  }
  for (int h : spec.hidden) {
    if (h < 1) throw std::runtime_error("mlp_init: invalid hidden width");
  }
  for (const auto& e : spec.embeddings) {
    if (e.cardinality < 1 || e.dim < 1) {
      throw std::runtime_error("mlp_init: invalid embedding spec");
    }
  }
  MlpParams p;
  p.spec = spec;
  Rng rng = Rng::stream(seed, "nn/mlp_init");

  std::vector<int> widths;
  widths.push_back(spec.total_input());
  for (int h : spec.hidden) widths.push_back(h);
  widths.push_back(spec.output_dim);

  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        w(i, j) = rng.uniform(-bound, bound);
      }
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vector::Zero(fan_out));
  }
  if (spec.norm != NormKind::None) {
    for (int h : spec.hidden) {
      p.norm_scale.push_back(Vector::Ones(h));
      p.norm_shift.push_back(Vector::Zero(h));
      if (spec.norm == NormKind::BatchNorm) {
        p.running_mean.push_back(Vector::Zero(h));
        p.running_var.push_back(Vector::Ones(h));
      }
    }
  }
  for (const auto& e : spec.embeddings) {
    Matrix table(e.cardinality, e.dim);
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      for (Eigen::Index j = 0; j < table.cols(); ++j) {
        table(i, j) = 0.02 * rng.normal();
      }
    }
    p.embeddings.push_back(std::move(table));
  }
  return p;
}

// Everything backward needs from one train-mode forward pass.
struct ForwardCache {
  Mode mode = Mode::Eval;
  std::vector<std::vector<int>> cat_indices;
  std::vector<Matrix> layer_in;    // input to each linear layer
  std::vector<Matrix> normalized;  // x-hat per hidden layer (norm layers only)
  std::vector<Matrix> pre_act;     // post-norm, pre-activation per hidden layer
  std::vector<Vector> bn_invstd;   // BatchNorm 1/sqrt(var+eps) per layer
  std::vector<Vector> ln_invstd;   // LayerNorm 1/sqrt(var+eps) per row per layer
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

// `update_running_stats=false` lets probes (finite differences, loss
// evaluation on train-mode graphs) run without mutating BatchNorm state.
inline ForwardResult mlp_forward(MlpParams& params, const Matrix& x,
                                 const std::vector<std::vector<int>>& cat_indices,
                                 Mode mode, bool update_running_stats = true) {
  const MlpSpec& spec = params.spec;
  const Eigen::Index batch = x.rows();
  if (batch < 1) throw std::runtime_error("forward: empty batch");
  if (x.cols() != spec.input_dim) {
    throw std::runtime_error("forward: expected " + std::to_string(spec.input_dim) +
                             " continuous inputs, got " + std::to_string(x.cols()));
  }
  if (cat_indices.size() != spec.embeddings.size()) {
    throw std::runtime_error("forward: embedding index group count mismatch");
  }
  if (spec.norm == NormKind::BatchNorm && mode == Mode::Train && batch < 2 &&
      !spec.hidden.empty()) {
    throw std::runtime_error("forward: train-mode BatchNorm needs batch >= 2");
  }

  ForwardResult r;
  ForwardCache& cache = r.cache;
  cache.mode = mode;
  cache.cat_indices = cat_indices;

  // Assemble [x | embeddings].
  Matrix h(batch, spec.total_input());
  if (spec.input_dim > 0) h.leftCols(spec.input_dim) = x;
  Eigen::Index col = spec.input_dim;
  for (std::size_t e = 0; e < spec.embeddings.size(); ++e) {
    const Matrix& table = params.embeddings[e];
    if (static_cast<Eigen::Index>(cat_indices[e].size()) != batch) {
      throw std::runtime_error("forward: embedding index batch mismatch");
    }
    for (Eigen::Index i = 0; i < batch; ++i) {
      const int idx = cat_indices[e][static_cast<std::size_t>(i)];
      if (idx < 0 || idx >= spec.embeddings[e].cardinality) {
        throw std::runtime_error("forward: embedding index out of range: " +
                                 std::to_string(idx));
      }
      h.block(i, col, 1, spec.embeddings[e].dim) = table.row(idx);
    }
    col += spec.embeddings[e].dim;
  }

  const std::size_t n_hidden = spec.hidden.size();
  for (std::size_t l = 0; l < n_hidden; ++l) {
    cache.layer_in.push_back(h);
    Matrix z = (h * params.weights[l].transpose()).rowwise() +
               params.biases[l].transpose();

    Matrix y;
    if (spec.norm == NormKind::None) {
      y = std::move(z);
      cache.normalized.emplace_back();
      cache.bn_invstd.emplace_back();
      cache.ln_invstd.emplace_back();
    } else if (spec.norm == NormKind::LayerNorm) {
      const Eigen::Index d = z.cols();
      Vector invstd(batch);
      Matrix xhat(batch, d);
      for (Eigen::Index i = 0; i < batch; ++i) {
        const double mu = z.row(i).mean();
        const double var =
            (z.row(i).array() - mu).square().sum() / static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + detail::kNormEps);
        invstd(i) = is;
        xhat.row(i) = ((z.row(i).array() - mu) * is).matrix();
      }
      Matrix scaled =
          (xhat.array().rowwise() * params.norm_scale[l].transpose().array()).matrix();
      y = scaled.rowwise() + params.norm_shift[l].transpose();
      cache.normalized.push_back(std::move(xhat));
      cache.bn_invstd.emplace_back();
      cache.ln_invstd.push_back(std::move(invstd));
    } else {  // BatchNorm
      Vector mean, var;
      if (mode == Mode::Train) {
        mean = z.colwise().mean().transpose();
        Matrix centered = z.rowwise() - mean.transpose();
        var = (centered.array().square().colwise().sum() /
               static_cast<double>(batch))
                  .matrix()
                  .transpose();
        if (update_running_stats) {
          params.running_mean[l] = 0.9 * params.running_mean[l] + 0.1 * mean;
          params.running_var[l] = 0.9 * params.running_var[l] + 0.1 * var;
        }
      } else {
        mean = params.running_mean[l];
        var = params.running_var[l];
      }
      Vector invstd = (var.array() + detail::kNormEps).rsqrt().matrix();
      Matrix xhat = ((z.rowwise() - mean.transpose()).array().rowwise() *
                     invstd.transpose().array())
                        .matrix();
      Matrix scaled =
          (xhat.array().rowwise() * params.norm_scale[l].transpose().array()).matrix();
      y = scaled.rowwise() + params.norm_shift[l].transpose();
      cache.normalized.push_back(std::move(xhat));
      cache.bn_invstd.push_back(std::move(invstd));
      cache.ln_invstd.emplace_back();
    }

    cache.pre_act.push_back(y);
    if (spec.activation == Activation::ReLU) {
      h = y.array().max(0.0).matrix();
    } else {  // SiLU: y * sigmoid(y)
      h = (y.array() * (1.0 / (1.0 + (-y.array()).exp()))).matrix();
    }
  }

  cache.layer_in.push_back(h);
  r.output = (h * params.weights.back().transpose()).rowwise() +
             params.biases.back().transpose();
  return r;
}

// Gradients live in the same container type as parameters.
inline MlpParams make_zero_grads(const MlpParams& params) {
  MlpParams g;
  g.spec = params.spec;
  for (const auto& w : params.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : params.biases) g.biases.push_back(Vector::Zero(b.size()));
  for (const auto& s : params.norm_scale) g.norm_scale.push_back(Vector::Zero(s.size()));
  for (const auto& s : params.norm_shift) g.norm_shift.push_back(Vector::Zero(s.size()));
  for (const auto& e : params.embeddings) g.embeddings.push_back(Matrix::Zero(e.rows(), e.cols()));
  return g;
}

// Exact reverse-mode gradients of sum over the batch of outputs.grad_output.
inline MlpParams mlp_backward(const MlpParams& params, const ForwardCache& cache,
                              const Matrix& grad_output) {
  if (cache.mode != Mode::Train) {
    throw std::runtime_error("backward: cache must come from a train-mode forward");
  }
  const MlpSpec& spec = params.spec;
  const std::size_t n_hidden = spec.hidden.size();
  if (cache.layer_in.size() != n_hidden + 1) {
    throw std::runtime_error("backward: stale cache");
  }
  const Eigen::Index batch = grad_output.rows();

  MlpParams g = make_zero_grads(params);

  // Output linear layer.
  g.weights.back() = grad_output.transpose() * cache.layer_in.back();
  g.biases.back() = grad_output.colwise().sum().transpose();
  Matrix dh = grad_output * params.weights.back();

  for (std::size_t li = n_hidden; li-- > 0;) {
    const Matrix& y = cache.pre_act[li];
    Matrix dy;
    if (spec.activation == Activation::ReLU) {
      dy = (y.array() > 0.0).select(dh, Matrix::Zero(dh.rows(), dh.cols()));
    } else {
      Matrix sig = (1.0 / (1.0 + (-y.array()).exp())).matrix();
      dy = (dh.array() * sig.array() *
            (1.0 + y.array() * (1.0 - sig.array())))
               .matrix();
    }

    Matrix dz;
    if (spec.norm == NormKind::None) {
      dz = std::move(dy);
    } else {
      const Matrix& xhat = cache.normalized[li];
      g.norm_scale[li] = dy.cwiseProduct(xhat).colwise().sum().transpose();
      g.norm_shift[li] = dy.colwise().sum().transpose();
      Matrix dxhat =
          (dy.array().rowwise() * params.norm_scale[li].transpose().array()).matrix();
      if (spec.norm == NormKind::LayerNorm) {
        const Eigen::Index d = dxhat.cols();
        dz.resize(dxhat.rows(), d);
        for (Eigen::Index i = 0; i < batch; ++i) {
          const double m1 = dxhat.row(i).mean();
          const double m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
          dz.row(i) = (cache.ln_invstd[li](i) *
                       (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2))
                          .matrix();
        }
      } else {  // BatchNorm with batch statistics
        const double nb = static_cast<double>(batch);
        Vector m1 = dxhat.colwise().sum().transpose() / nb;
        Vector m2 = dxhat.cwiseProduct(xhat).colwise().sum().transpose() / nb;
        Matrix centered = dxhat.rowwise() - m1.transpose();
        Matrix proj = (xhat.array().rowwise() * m2.transpose().array()).matrix();
        dz = ((centered - proj).array().rowwise() *
              cache.bn_invstd[li].transpose().array())
                 .matrix();
      }
    }

    g.weights[li] = dz.transpose() * cache.layer_in[li];
    g.biases[li] = dz.colwise().sum().transpose();
    dh = dz * params.weights[li];
  }

  // Split the input gradient into embedding-table rows; the continuous block
  // has no trainable parameters.
  Eigen::Index col = spec.input_dim;
  for (std::size_t e = 0; e < spec.embeddings.size(); ++e) {
    const int dim = spec.embeddings[e].dim;
    for (Eigen::Index i = 0; i < batch; ++i) {
      g.embeddings[e].row(cache.cat_indices[e][static_cast<std::size_t>(i)]) +=
          dh.block(i, col, 1, dim);
    }
    col += dim;
  }
  return g;
}

struct AdamState {
  std::vector<Vector> m;  // aligned with detail::for_each_tensor order
  std::vector<Vector> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;
  double weight_decay = 0.0;  // > 0 switches on decoupled (AdamW) decay
};

inline AdamState make_adam(MlpParams& params, double lr, double weight_decay = 0.0) {
  AdamState s;
  s.lr = lr;
  s.weight_decay = weight_decay;
  detail::for_each_tensor(
      params, [&](const std::string&, detail::TensorKind, double*, Eigen::Index size) {
        s.m.push_back(Vector::Zero(size));
        s.v.push_back(Vector::Zero(size));
      });
  return s;
}

// Bias-corrected Adam; decoupled weight decay touches weight matrices only
// (never biases, norm parameters, or embeddings).  `lr_override` supports
// schedules such as cosine annealing without mutating the stored rate.
inline void adam_step(MlpParams& params, MlpParams& grads, AdamState& state,
                      double lr_override = -1.0) {
  const double lr = lr_override >= 0.0 ? lr_override : state.lr;
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  std::vector<std::pair<double*, Eigen::Index>> param_views;
  std::vector<detail::TensorKind> kinds;
  detail::for_each_tensor(params, [&](const std::string&, detail::TensorKind k,
                                      double* data, Eigen::Index size) {
    param_views.emplace_back(data, size);
    kinds.push_back(k);
  });

  std::size_t slot = 0;
  detail::for_each_tensor(grads, [&](const std::string& name, detail::TensorKind,
                                     double* gdata, Eigen::Index size) {
    Eigen::Map<Vector> g(gdata, size);
    if (!g.allFinite()) {
      throw std::runtime_error("adam_step: non-finite gradient in tensor " + name);
    }
    Eigen::Map<Vector> p(param_views[slot].first, param_views[slot].second);
    Vector& m = state.m[slot];
    Vector& v = state.v[slot];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    if (state.weight_decay > 0.0 && kinds[slot] == detail::TensorKind::Weight) {
      p -= lr * state.weight_decay * p;
    }
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
    ++slot;
  });
}

// Loss probe: maps network outputs to (loss, dLoss/dOutputs).
using LossProbe = std::function<std::pair<double, Matrix>(const Matrix&)>;

// Max relative error between analytic gradients and central finite
// differences over >= `min_coords` parameter coordinates.
inline double grad_check(const MlpSpec& spec, std::uint64_t seed,
                         const LossProbe& probe, double epsilon,
                         int min_coords = 200, int batch = 8) {
  MlpParams params = mlp_init(spec, seed);
  Rng rng = Rng::stream(seed, "nn/grad_check");

  Matrix x(batch, spec.input_dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  }
  std::vector<std::vector<int>> cats;
  for (const auto& e : spec.embeddings) {
    std::vector<int> idx(static_cast<std::size_t>(batch));
    for (auto& v : idx) {
      v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(e.cardinality)));
    }
    cats.push_back(std::move(idx));
  }

  auto loss_at = [&]() {
    ForwardResult r = mlp_forward(params, x, cats, Mode::Train,
                                  /*update_running_stats=*/false);
    return probe(r.output).first;
  };

  ForwardResult r = mlp_forward(params, x, cats, Mode::Train,
                                /*update_running_stats=*/false);
  Matrix dout = probe(r.output).second;
  MlpParams grads = mlp_backward(params, r.cache, dout);

  std::vector<std::pair<double*, Eigen::Index>> pviews, gviews;
  detail::for_each_tensor(params,
                          [&](const std::string&, detail::TensorKind, double* d,
                              Eigen::Index s) { pviews.emplace_back(d, s); });
  detail::for_each_tensor(grads,
                          [&](const std::string&, detail::TensorKind, double* d,
                              Eigen::Index s) { gviews.emplace_back(d, s); });

  Eigen::Index total = 0;
  for (const auto& [ptr, size] : pviews) (void)ptr, total += size;
  const Eigen::Index coords = std::min<Eigen::Index>(total, min_coords);

  double max_rel = 0.0;
  for (Eigen::Index c = 0; c < coords; ++c) {
    // Even coverage: stride through all coordinates with a random offset.
    Eigen::Index flat =
        (static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(total))) +
         c * (total / coords)) %
        total;
    std::size_t t = 0;
    while (flat >= pviews[t].second) {
      flat -= pviews[t].second;
      ++t;
    }
    double* coord = pviews[t].first + flat;
    const double analytic = *(gviews[t].first + flat);
    const double saved = *coord;
    *coord = saved + epsilon;
    const double lp = loss_at();
    *coord = saved - epsilon;
    const double lm = loss_at();
    *coord = saved;
    const double fd = (lp - lm) / (2.0 * epsilon);
    const double rel = std::abs(analytic - fd) /
                       std::max(1e-8, std::abs(analytic) + std::abs(fd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace treeflow
