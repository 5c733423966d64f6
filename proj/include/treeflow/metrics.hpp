#pragma once
// Evaluation metrics for synthetic tabular data: train-on-synthetic /
// test-on-real accuracy, per-feature 1-D Wasserstein distance, correlation
// structure error, and a standard classification report.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeflow/dataset.hpp"
#include "treeflow/forest.hpp"
#include "treeflow/linalg.hpp"

namespace treeflow {

struct ClassReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double cohen_kappa = 0.0;
};

struct EvalReport {
  double tstr_accuracy = 0.0;
  double wasserstein = 0.0;
  double correlation_error = 0.0;
  double runtime_seconds = 0.0;
};

inline nlohmann::json class_report_to_json(const ClassReport& r) {
  return nlohmann::json{
      {"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"cohen_kappa", r.cohen_kappa}};
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  return nlohmann::json{{"tstr_accuracy", r.tstr_accuracy},
                        {"wasserstein", r.wasserstein},
                        {"correlation_error", r.correlation_error},
                        {"runtime_seconds", r.runtime_seconds}};
}

// Accuracy, macro-averaged F1, and Cohen's kappa.  Macro-F1 averages over
// every class id in {0..class_count-1}; a class absent from both columns
// contributes an F1 of zero.  Kappa uses chance agreement from the marginal
// products; if chance agreement is 1 both marginals are the same point mass,
// observed agreement is forced to 1, and kappa is reported as 1.
inline ClassReport classification_report(const std::vector<int>& truth,
                                         const std::vector<int>& predicted,
                                         int class_count) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw std::invalid_argument("classification_report: label vectors must be nonempty and equal length");
  }
  if (class_count < 2) {
    throw std::invalid_argument("classification_report: class_count must be at least 2");
  }
  const auto k = static_cast<std::size_t>(class_count);
  std::vector<std::vector<std::int64_t>> confusion(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= class_count || predicted[i] < 0 ||
        predicted[i] >= class_count) {
      throw std::invalid_argument("classification_report: label outside [0, class_count)");
    }
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  const double n = static_cast<double>(truth.size());

  ClassReport rep;
  double diag = 0.0;
  for (std::size_t c = 0; c < k; ++c) diag += static_cast<double>(confusion[c][c]);
  rep.accuracy = diag / n;

  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(confusion[c][c]);
    double truth_c = 0.0, pred_c = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      truth_c += static_cast<double>(confusion[c][j]);
      pred_c += static_cast<double>(confusion[j][c]);
    }
    const double denom = truth_c + pred_c;  // F1 = 2tp / (truth_c + pred_c)
    f1_sum += denom > 0.0 ? 2.0 * tp / denom : 0.0;
  }
  rep.macro_f1 = f1_sum / static_cast<double>(k);

  double p_e = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double truth_c = 0.0, pred_c = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      truth_c += static_cast<double>(confusion[c][j]);
      pred_c += static_cast<double>(confusion[j][c]);
    }
    p_e += (truth_c / n) * (pred_c / n);
  }
  rep.cohen_kappa = p_e >= 1.0 ? 1.0 : (rep.accuracy - p_e) / (1.0 - p_e);
  return rep;
}

// Train-on-synthetic, test-on-real: fit a 100-tree depth-15 forest on the
// synthetic set and report its accuracy on the real test set.  Classes
// present in the test set but missing from the synthetic set are warned
// about (they can never be predicted).
inline double tstr(const Dataset& synthetic, const Dataset& real_test,
                   std::uint64_t seed = 7) {
  if (synthetic.class_count != real_test.class_count) {
    throw std::invalid_argument("tstr: class counts differ between synthetic and real data");
  }
  std::vector<bool> present(static_cast<std::size_t>(synthetic.class_count), false);
  for (int y : synthetic.labels) present[static_cast<std::size_t>(y)] = true;
  for (int y : real_test.labels) {
    if (!present[static_cast<std::size_t>(y)]) {
      std::cerr << "warning: synthetic data contains no samples of class " << y
                << "; it can never be predicted\n";
      present[static_cast<std::size_t>(y)] = true;  // warn once per class
    }
  }
  Forest forest = fit_forest(synthetic, 100, 15, seed);
  const std::vector<int> predicted = forest_predict_all(forest, real_test.features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == real_test.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

// 1-D Wasserstein-1 distance between two empirical distributions, computed
// as the integral of |quantile difference| over [0,1].  For equal sample
// counts this reduces to the mean absolute difference of the sorted values;
// otherwise the piecewise-constant quantile functions are integrated with a
// two-pointer sweep over their merged breakpoints.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("wasserstein_1d: empty sample");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double q = 0.0, total = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const double qa = static_cast<double>(ia + 1) / na;  // end of a's current step
    const double qb = static_cast<double>(ib + 1) / nb;
    const double q_next = std::min(qa, qb);
    total += (q_next - q) * std::abs(a[ia] - b[ib]);
    q = q_next;
    if (qa <= q_next) ++ia;
    if (qb <= q_next) ++ib;
  }
  return total;
}

// Mean of per-feature (per-column) 1-D Wasserstein distances.
inline double wasserstein_1d_mean(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("wasserstein_1d_mean: column counts differ");
  }
  double total = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    std::vector<double> va(a.col(c).data(), a.col(c).data() + a.rows());
    std::vector<double> vb(b.col(c).data(), b.col(c).data() + b.rows());
    total += wasserstein_1d(std::move(va), std::move(vb));
  }
  return total / static_cast<double>(a.cols());
}

namespace detail {

// Pearson correlation matrix.  A zero-variance column gets the identity
// convention: correlation 1 with itself, 0 with everything else.
inline Matrix correlation_matrix(const Matrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2) throw std::invalid_argument("correlation_matrix: need at least 2 rows");
  Matrix centered = x.rowwise() - x.colwise().mean();
  Vector sd(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    sd(c) = std::sqrt(centered.col(c).squaredNorm() / static_cast<double>(n));
  }
  Matrix corr = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      if (sd(i) == 0.0 || sd(j) == 0.0) continue;  // identity-row convention
      const double cov = centered.col(i).dot(centered.col(j)) / static_cast<double>(n);
      corr(i, j) = corr(j, i) = cov / (sd(i) * sd(j));
    }
  }
  return corr;
}

}  // namespace detail

// Frobenius norm of the difference between the two Pearson correlation
// matrices.
inline double correlation_error(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("correlation_error: column counts differ");
  }
  return (detail::correlation_matrix(a) - detail::correlation_matrix(b)).norm();
}

// Runs fn() and returns (result, elapsed wall seconds).
template <typename Fn>
auto timed(Fn&& fn) -> std::pair<decltype(fn()), double> {
  const auto start = std::chrono::steady_clock::now();
  auto result = fn();
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return {std::move(result), elapsed.count()};
}

}  // namespace treeflow
