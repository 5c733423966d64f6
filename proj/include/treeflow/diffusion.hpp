#pragma once
// DDPM machinery: noise-prediction score network, learned forward SDE
// (Euler-Maruyama), deterministic reverse probability-flow ODE, and the
// SNR-based entropy proxy.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeflow/dataset.hpp"
#include "treeflow/linalg.hpp"
#include "treeflow/nn.hpp"
#include "treeflow/rng.hpp"
#include "treeflow/serialize.hpp"

namespace treeflow {

struct BetaSchedule {
  Vector betas;       // beta_i, i = 1..N stored 0-based
  Vector alphas;      // 1 - beta_i
  Vector alpha_bars;  // cumulative products, strictly decreasing

  int n() const { return static_cast<int>(betas.size()); }
};

inline BetaSchedule linear_beta_schedule(int n, double beta_start, double beta_end) {
  if (n < 2) throw std::runtime_error("beta schedule: N must be >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::runtime_error("beta schedule: need 0 < start <= end < 1");
  }
  BetaSchedule s;
  s.betas.resize(n);
  s.alphas.resize(n);
  s.alpha_bars.resize(n);
  double bar = 1.0;
  for (int i = 0; i < n; ++i) {
    const double beta =
        beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                         static_cast<double>(n - 1);
    s.betas(i) = beta;
    s.alphas(i) = 1.0 - beta;
    bar *= 1.0 - beta;
    s.alpha_bars(i) = bar;
  }
  return s;
}

// Noise-prediction network over (x, t); score s = -eps_hat / sqrt(1 - abar).
struct ScoreNet {
  MlpParams params;
  BetaSchedule schedule;

  int data_dim() const { return params.spec.output_dim; }
};

inline MlpSpec score_net_spec(int data_dim, std::vector<int> hidden = {128, 128, 128, 128}) {
  MlpSpec spec;
  spec.input_dim = data_dim + 1;  // (x, t)
  spec.hidden = std::move(hidden);
  spec.activation = Activation::ReLU;
  spec.norm = NormKind::None;
  spec.output_dim = data_dim;
  return spec;
}

// Predicted noise for a batch at one schedule index i (1-based).
inline Matrix predict_noise(ScoreNet& net, const Matrix& x, int index1) {
  const double t = static_cast<double>(index1) / net.schedule.n();
  Matrix input(x.rows(), x.cols() + 1);
  input.leftCols(x.cols()) = x;
  input.col(x.cols()).setConstant(t);
  return mlp_forward(net.params, input, {}, Mode::Eval).output;
}

// Score at schedule index i (1-based): s = -eps_hat / sqrt(1 - abar_i).
inline Matrix score_at(ScoreNet& net, const Matrix& x, int index1) {
  const double denom = std::sqrt(1.0 - net.schedule.alpha_bars(index1 - 1));
  return -predict_noise(net, x, index1) / denom;
}

struct ScoreTrainConfig {
  int epochs = 400;
  int batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {128, 128, 128, 128};
};

struct ScoreTrainResult {
  ScoreNet net;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

// Monte-Carlo estimate of the noise-prediction MSE on `draws` samples;
// used to compare trained vs untrained nets under the same probe seed.
inline double score_matching_loss(ScoreNet& net, const Dataset& ds, int draws,
                                  std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "diffusion/eval_loss");
  const int N = net.schedule.n();
  const Eigen::Index d = ds.features.cols();
  double total = 0.0;
  for (int k = 0; k < draws; ++k) {
    const auto row = static_cast<Eigen::Index>(rng.uniform_index(ds.n()));
    const int i = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(N)));
    Matrix eps(1, d), x(1, d);
    for (Eigen::Index c = 0; c < d; ++c) eps(0, c) = rng.normal();
    const double ab = net.schedule.alpha_bars(i - 1);
    x = std::sqrt(ab) * ds.features.row(row) + std::sqrt(1.0 - ab) * eps;
    Matrix pred = predict_noise(net, x, i);
    total += (pred - eps).squaredNorm() / static_cast<double>(d);
  }
  return total / draws;
}

// DDPM training: per example sample a step index i ~ U{1..N} and noise eps,
// form x_i = sqrt(abar_i) x0 + sqrt(1-abar_i) eps, and regress the predicted
// noise onto eps with Adam under cosine learning-rate annealing lr -> 0.
inline ScoreTrainResult train_score_net(const Dataset& ds, const BetaSchedule& schedule,
                                        const ScoreTrainConfig& cfg) {
  const Eigen::Index d = ds.features.cols();
  if (d < 1) throw std::runtime_error("train_score_net: no features");

  ScoreTrainResult out;
  out.net.schedule = schedule;
  out.net.params = mlp_init(score_net_spec(static_cast<int>(d), cfg.hidden), cfg.seed);

  Rng rng = Rng::stream(cfg.seed, "diffusion/train");
  AdamState adam = make_adam(out.net.params, cfg.lr);

  const std::size_t n = ds.n();
  const int batches_per_epoch =
      static_cast<int>((n + static_cast<std::size_t>(cfg.batch) - 1) /
                       static_cast<std::size_t>(cfg.batch));
  const std::int64_t total_steps =
      static_cast<std::int64_t>(cfg.epochs) * batches_per_epoch;
  const int N = schedule.n();

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> perm = rng.permutation(n);
    double epoch_loss = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * cfg.batch;
      const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.batch));
      const Eigen::Index bs = static_cast<Eigen::Index>(hi - lo);

      Matrix input(bs, d + 1);
      Matrix eps(bs, d);
      for (Eigen::Index r = 0; r < bs; ++r) {
        const auto row = static_cast<Eigen::Index>(perm[lo + static_cast<std::size_t>(r)]);
        const int i = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(N)));
        const double ab = schedule.alpha_bars(i - 1);
        for (Eigen::Index c = 0; c < d; ++c) eps(r, c) = rng.normal();
        input.block(r, 0, 1, d) = std::sqrt(ab) * ds.features.row(row) +
                                  std::sqrt(1.0 - ab) * eps.row(r);
        input(r, d) = static_cast<double>(i) / N;
      }

      ForwardResult fr = mlp_forward(out.net.params, input, {}, Mode::Train);
      Matrix diff = fr.output - eps;
      const double denom = static_cast<double>(bs) * static_cast<double>(d);
      const double loss = diff.squaredNorm() / denom;
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_score_net: non-finite loss at step " +
                                 std::to_string(step));
      }
      Matrix dout = (2.0 / denom) * diff;
      MlpParams grads = mlp_backward(out.net.params, fr.cache, dout);
      const double lr_t =
          cfg.lr * 0.5 *
          (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                          static_cast<double>(total_steps)));
      adam_step(out.net.params, grads, adam, lr_t);
      ++step;
      epoch_loss += loss;
    }
    out.epoch_loss.push_back(epoch_loss / batches_per_epoch);
  }
  return out;
}

// Simulated paths over the schedule grid, t_i = i/N.
struct TrajectoryBundle {
  Vector times;                  // [N+1]
  std::vector<Matrix> positions; // [N+1] frames of [n_points x d]

  int frames() const { return static_cast<int>(positions.size()); }
};

// Euler-Maruyama under the learned drift -b(t)/2 x - b(t)/2 s(x,t), one
// derived noise stream per point so results do not depend on evaluation
// order.  b(t) is the continuous-time rate matching the discrete schedule,
// b(t_i) = N * beta_i, so with dt = 1/N each update reduces to the familiar
// per-step form x <- x - beta_i/2 (x + s) + sqrt(beta_i) z; the discrete
// betas alone would inject only ~1% of the schedule's noise budget and leave
// the process essentially frozen.
inline TrajectoryBundle simulate_learned_forward(ScoreNet& net, const Matrix& points,
                                                 std::uint64_t seed) {
  if (points.cols() != net.data_dim()) {
    throw std::runtime_error("simulate_learned_forward: dimension mismatch");
  }
  const int N = net.schedule.n();
  const double dt = 1.0 / N;
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();

  Rng base = Rng::stream(seed, "diffusion/forward_sde");
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index p = 0; p < n; ++p) {
    streams.push_back(base.substream(static_cast<std::uint64_t>(p)));
  }

  TrajectoryBundle bundle;
  bundle.times.resize(N + 1);
  for (int i = 0; i <= N; ++i) bundle.times(i) = static_cast<double>(i) / N;
  bundle.positions.reserve(static_cast<std::size_t>(N + 1));
  bundle.positions.push_back(points);

  Matrix x = points;
  for (int i = 1; i <= N; ++i) {
    const double beta = static_cast<double>(N) * net.schedule.betas(i - 1);
    Matrix s = score_at(net, x, i);
    Matrix z(n, d);
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index c = 0; c < d; ++c) z(p, c) = streams[static_cast<std::size_t>(p)].normal();
    }
    x = x + (-0.5 * beta * x - 0.5 * beta * s) * dt + std::sqrt(beta * dt) * z;
    for (Eigen::Index p = 0; p < n; ++p) {
      if (!x.row(p).allFinite()) {
        throw std::runtime_error("simulate_learned_forward: non-finite state at step " +
                                 std::to_string(i) + ", point " + std::to_string(p));
      }
    }
    bundle.positions.push_back(x);
  }
  return bundle;
}

// Deterministic reverse integration of dx/dt = -b(t)/2 [x + s(x,t)] from
// t = 1 to 0, with b(t_i) = N * beta_i as in the forward simulator.
// `steps` == N walks the schedule grid exactly; other values map each
// integration time to the nearest schedule index.
inline TrajectoryBundle reverse_pf_ode(ScoreNet& net, const Matrix& noise, int steps) {
  if (steps < 1) throw std::runtime_error("reverse_pf_ode: steps must be >= 1");
  const int N = net.schedule.n();
  const double dt = 1.0 / steps;

  TrajectoryBundle bundle;
  bundle.times.resize(steps + 1);
  bundle.positions.reserve(static_cast<std::size_t>(steps + 1));
  // times run 1 -> 0 in integration order.
  for (int k = 0; k <= steps; ++k) {
    bundle.times(k) = 1.0 - static_cast<double>(k) / steps;
  }
  bundle.positions.push_back(noise);

  Matrix x = noise;
  for (int k = steps; k >= 1; --k) {
    const double t = static_cast<double>(k) / steps;
    int i = static_cast<int>(std::lround(t * N));
    i = std::max(1, std::min(N, i));
    const double beta = static_cast<double>(N) * net.schedule.betas(i - 1);
    Matrix s = score_at(net, x, i);
    // Stepping t -> t - dt with dx/dt = -b/2 (x + s).
    x = x + 0.5 * beta * (x + s) * dt;
    if (!x.allFinite()) {
      throw std::runtime_error("reverse_pf_ode: non-finite state at t = " +
                               std::to_string(t));
    }
    bundle.positions.push_back(x);
  }
  return bundle;
}

// Entropy proxy 1/(1+SNR).  The cumulative-product reading SNR = abar/(1-abar)
// gives proxy = 1 - abar (default); `use_alpha_bar=false` selects the literal
// per-step alpha reading, proxy = 1 - alpha.
inline Vector snr_entropy_proxy(const BetaSchedule& schedule, bool use_alpha_bar = true) {
  const Vector& a = use_alpha_bar ? schedule.alpha_bars : schedule.alphas;
  return (1.0 - a.array()).matrix();
}

inline void save_trajectory(const std::string& path, const TrajectoryBundle& bundle) {
  std::vector<detail::NamedTensor> tensors;
  tensors.push_back({"times", bundle.times.size(), 1, bundle.times.data()});
  for (std::size_t f = 0; f < bundle.positions.size(); ++f) {
    tensors.push_back({"frame" + std::to_string(f), bundle.positions[f].rows(),
                       bundle.positions[f].cols(), bundle.positions[f].data()});
  }
  nlohmann::json manifest;
  manifest["kind"] = "trajectory";
  manifest["frames"] = bundle.positions.size();
  detail::write_blob(path, std::move(manifest), tensors);
}

}  // namespace treeflow
