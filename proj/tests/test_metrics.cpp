#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "treeflow/treeflow.hpp"

using namespace treeflow;
using Catch::Matchers::WithinAbs;

namespace {

// Optimal transport cost by brute force: best assignment over permutations.
double assignment_w1(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::size_t> idx(b.size());
  std::iota(idx.begin(), idx.end(), 0);
  double best = 1e300;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[idx[i]]);
    best = std::min(best, cost / static_cast<double>(a.size()));
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

// All length-n tuples over {0, 1, ..., base-1}, as doubles.
std::vector<std::vector<double>> tuples(std::size_t n, int base) {
  std::vector<std::vector<double>> out;
  std::vector<int> digits(n, 0);
  while (true) {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = digits[i];
    out.push_back(std::move(t));
    std::size_t pos = 0;
    while (pos < n && ++digits[pos] == base) digits[pos++] = 0;
    if (pos == n) break;
  }
  return out;
}

}  // namespace

TEST_CASE("equal-size transport distance matches the brute-force assignment",
          "[metrics]") {
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto all = tuples(n, 4);
    for (const auto& a : all) {
      for (const auto& b : all) {
        const double got = wasserstein_1d(a, b);
        const double want = assignment_w1(a, b);
        REQUIRE_THAT(got, WithinAbs(want, 1e-9));
      }
    }
  }
}

TEST_CASE("the transport distance satisfies the metric axioms", "[metrics]") {
  std::vector<std::vector<double>> sets;
  for (std::size_t n = 1; n <= 3; ++n) {
    for (auto& t : tuples(n, 3)) sets.push_back(std::move(t));
  }
  for (const auto& a : sets) {
    CHECK(wasserstein_1d(a, a) == 0.0);
    for (const auto& b : sets) {
      const double ab = wasserstein_1d(a, b);
      CHECK_THAT(ab, WithinAbs(wasserstein_1d(b, a), 1e-12));
      CHECK(ab >= 0.0);
      for (const auto& c : sets) {
        CHECK(wasserstein_1d(a, c) <= ab + wasserstein_1d(b, c) + 1e-12);
      }
    }
  }
}

TEST_CASE("transport distances match hand values", "[metrics]") {
  CHECK(wasserstein_1d({0.0, 1.0}, {0.0, 3.0}) == 1.0);
  CHECK(wasserstein_1d({0.0}, {0.0, 3.0}) == 1.5);  // unequal sizes: quantile sweep

  // translation invariance and pure-shift distance
  CHECK_THAT(wasserstein_1d({1.0, 2.0, 5.0}, {0.0, 4.0, 4.5}),
             WithinAbs(wasserstein_1d({11.0, 12.0, 15.0}, {10.0, 14.0, 14.5}), 1e-12));
  CHECK_THAT(wasserstein_1d({1.0, 2.0, 5.0}, {1.25, 2.25, 5.25}), WithinAbs(0.25, 1e-12));

  CHECK_THROWS(wasserstein_1d({}, {1.0}));
  CHECK_THROWS(wasserstein_1d({1.0}, {}));
}

TEST_CASE("the per-feature mean distance averages over columns", "[metrics]") {
  Matrix a(2, 2), b(2, 2);
  a << 0.0, 0.0, 1.0, 0.0;
  b << 0.0, 2.0, 3.0, 2.0;
  // column 0: {0,1} vs {0,3} -> 1.0; column 1: {0,0} vs {2,2} -> 2.0
  CHECK_THAT(wasserstein_1d_mean(a, b), WithinAbs(1.5, 1e-12));

  Matrix c(2, 3);
  CHECK_THROWS(wasserstein_1d_mean(a, c));
}

TEST_CASE("correlation error measures structure, not scale", "[metrics]") {
  Matrix a(4, 2);
  a << 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0;
  CHECK(correlation_error(a, a) == 0.0);

  // flipping one column flips the off-diagonal sign: ||diff|| = 2 sqrt(2)
  Matrix flipped = a;
  flipped.col(1) = -flipped.col(1);
  CHECK_THAT(correlation_error(a, flipped), WithinAbs(2.0 * std::sqrt(2.0), 1e-12));
  CHECK_THAT(correlation_error(flipped, a), WithinAbs(2.0 * std::sqrt(2.0), 1e-12));

  // scaling a column leaves the correlation structure unchanged
  Matrix scaled = a;
  scaled.col(1) *= 17.0;
  CHECK_THAT(correlation_error(a, scaled), WithinAbs(0.0, 1e-12));

  // a zero-variance column takes the identity-row convention
  Matrix constant = a;
  constant.col(1).setConstant(5.0);
  CHECK_THAT(correlation_error(a, constant), WithinAbs(std::sqrt(2.0), 1e-12));

  Matrix one_row(1, 2);
  one_row << 1.0, 2.0;
  CHECK_THROWS(correlation_error(one_row, one_row));
  Matrix wide(4, 3);
  CHECK_THROWS(correlation_error(a, wide));
}

TEST_CASE("classification reports match hand-worked confusion tables", "[metrics]") {
  ClassReport perfect = classification_report({0, 1, 0, 1}, {0, 1, 0, 1}, 2);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  CHECK(perfect.cohen_kappa == 1.0);

  ClassReport inverted = classification_report({0, 1}, {1, 0}, 2);
  CHECK(inverted.accuracy == 0.0);
  CHECK(inverted.macro_f1 == 0.0);
  CHECK_THAT(inverted.cohen_kappa, WithinAbs(-1.0, 1e-12));

  // constant prediction on balanced truth: kappa collapses to zero
  ClassReport constant = classification_report({0, 1, 0, 1}, {0, 0, 0, 0}, 2);
  CHECK(constant.accuracy == 0.5);
  CHECK_THAT(constant.macro_f1, WithinAbs(1.0 / 3.0, 1e-12));
  CHECK_THAT(constant.cohen_kappa, WithinAbs(0.0, 1e-12));

  // both marginals a point mass: chance agreement is 1, kappa reported as 1
  ClassReport degenerate = classification_report({0, 0, 0}, {0, 0, 0}, 2);
  CHECK(degenerate.accuracy == 1.0);
  CHECK(degenerate.cohen_kappa == 1.0);
  CHECK(degenerate.macro_f1 == 0.5);  // the absent class contributes zero

  // a class absent from both columns drags the macro average down
  ClassReport absent = classification_report({0, 1, 0, 1}, {0, 1, 0, 1}, 3);
  CHECK_THAT(absent.macro_f1, WithinAbs(2.0 / 3.0, 1e-12));

  // accuracy is one minus the normalized hamming distance
  const std::vector<int> truth = {0, 1, 2, 1, 0, 2};
  const std::vector<int> pred = {0, 2, 2, 1, 1, 2};
  std::size_t diff = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) diff += truth[i] != pred[i];
  ClassReport mixed = classification_report(truth, pred, 3);
  CHECK_THAT(mixed.accuracy,
             WithinAbs(1.0 - static_cast<double>(diff) / static_cast<double>(truth.size()),
                       1e-12));

  CHECK_THROWS(classification_report({}, {}, 2));
  CHECK_THROWS(classification_report({0, 1}, {0}, 2));
  CHECK_THROWS(classification_report({0, 1}, {0, 1}, 1));
  CHECK_THROWS(classification_report({0, 2}, {0, 1}, 2));
  CHECK_THROWS(classification_report({0, -1}, {0, 1}, 2));
}

TEST_CASE("train-on-synthetic scoring separates real structure from noise",
          "[metrics]") {
  Vector cl(2), cr(2);
  cl << -2.0, 0.0;
  cr << 2.0, 0.0;
  Dataset ds = make_blobs(BlobSpec::uniform({cl, cr}, 0.4, 300, 4));
  auto [train, test] = train_test_split(ds, 0.3, 5, true);

  const double base = tstr(train, test);
  CHECK(base >= 0.9);
  CHECK(tstr(train, test) == base);  // same seed, same forest, same score

  // shuffled labels destroy the signal: accuracy falls into the chance band
  Dataset shuffled = train;
  Rng rng(123);
  const std::vector<std::size_t> perm = rng.permutation(shuffled.labels.size());
  std::vector<int> relabeled(shuffled.labels.size());
  for (std::size_t i = 0; i < perm.size(); ++i) relabeled[i] = shuffled.labels[perm[i]];
  shuffled.labels = std::move(relabeled);
  const double chance = tstr(shuffled, test);
  CHECK(chance >= 0.25);
  CHECK(chance <= 0.75);

  Dataset wrong = train;
  wrong.class_count = 3;
  CHECK_THROWS(tstr(wrong, test));
}

TEST_CASE("a class missing from the synthetic set is warned about", "[metrics]") {
  Vector cl(2), cr(2);
  cl << -2.0, 0.0;
  cr << 2.0, 0.0;
  Dataset ds = make_blobs(BlobSpec::uniform({cl, cr}, 0.4, 120, 4));

  Dataset only_zero;
  only_zero.class_count = ds.class_count;
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.labels[i] == 0) keep.push_back(static_cast<Eigen::Index>(i));
  }
  only_zero.features.resize(static_cast<Eigen::Index>(keep.size()), ds.features.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    only_zero.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(keep[i]);
    only_zero.labels.push_back(0);
  }

  std::ostringstream captured;
  std::streambuf* old = std::cerr.rdbuf(captured.rdbuf());
  const double acc = tstr(only_zero, ds);
  std::cerr.rdbuf(old);

  CHECK(captured.str().find("class 1") != std::string::npos);
  CHECK(acc <= 0.6);  // it can only ever get class-0 rows right
}

TEST_CASE("the timer reports wall time and passes the result through", "[metrics]") {
  auto [value, secs] = timed([] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return 42;
  });
  CHECK(value == 42);
  CHECK(secs >= 0.099);
  CHECK(secs < 0.5);

  auto [unit, fast] = timed([] { return 1; });
  CHECK(unit == 1);
  CHECK(fast < 0.05);
}
