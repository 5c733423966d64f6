#include <catch2/catch_amalgamated.hpp>

#include "treeflow/treeflow.hpp"

using namespace treeflow;
using Catch::Matchers::WithinAbs;

namespace {

TrajectoryBundle bundle_1d(const std::vector<std::vector<double>>& frames) {
  TrajectoryBundle traj;
  traj.times.resize(static_cast<Eigen::Index>(frames.size()));
  const auto n = static_cast<Eigen::Index>(frames.front().size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    traj.times(static_cast<Eigen::Index>(f)) =
        frames.size() == 1 ? 0.0
                           : static_cast<double>(f) / static_cast<double>(frames.size() - 1);
    Matrix m(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) m(i, 0) = frames[f][static_cast<std::size_t>(i)];
    traj.positions.push_back(std::move(m));
  }
  return traj;
}

}  // namespace

TEST_CASE("cluster statistics track centroids and mean spread", "[hierarchy]") {
  // a singleton never spreads
  TrajectoryBundle solo = bundle_1d({{3.0}, {1.0}, {-2.0}});
  ClusterStats s = track_cluster_stats(solo, {0});
  CHECK(s.spreads.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.centroids(0, 0) == 3.0);
  CHECK(s.centroids(2, 0) == -2.0);

  // a mirrored pair centers on the origin with unit spread
  TrajectoryBundle pair = bundle_1d({{1.0, -1.0}, {1.0, -1.0}});
  ClusterStats p = track_cluster_stats(pair, {0, 1});
  CHECK(p.centroids.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.spreads(0) == 1.0);
  CHECK(p.spreads(1) == 1.0);

  CHECK_THROWS(track_cluster_stats(solo, {}));
}

TEST_CASE("union statistics are computed from raw members, not sub-cluster summaries",
          "[hierarchy]") {
  TrajectoryBundle traj = bundle_1d({{0.0, 2.0, 10.0}});
  ClusterStats ab = track_cluster_stats(traj, {0, 1});
  ClusterStats c = track_cluster_stats(traj, {2});
  ClusterStats all = track_cluster_stats(traj, {0, 1, 2});
  CHECK(ab.spreads(0) == 1.0);
  CHECK(c.spreads(0) == 0.0);
  CHECK(all.centroids(0, 0) == 4.0);
  CHECK(all.spreads(0) == 4.0);  // (4 + 2 + 6) / 3, not the average of 1 and 0
}

TEST_CASE("the merge criterion fires at the first frame inside the spread sum",
          "[hierarchy]") {
  // two 2-point clusters with spread 0.5 each; centroid gaps 2.0, 1.2, 0.5
  TrajectoryBundle traj = bundle_1d({{-0.5, 0.5, 1.5, 2.5},
                                     {-0.5, 0.5, 0.7, 1.7},
                                     {-0.5, 0.5, 0.0, 1.0}});
  ClusterStats a = track_cluster_stats(traj, {0, 1});
  ClusterStats b = track_cluster_stats(traj, {2, 3});
  auto when = merger_time(traj, a, b);
  REQUIRE(when.has_value());
  CHECK(*when == 1.0);  // frame 2 of times {0, 0.5, 1}; 1.2 < 1.0 is false at frame 1

  // identical clusters merge immediately
  TrajectoryBundle same = bundle_1d({{-1.0, 1.0, -1.0, 1.0}, {-1.0, 1.0, -1.0, 1.0}});
  ClusterStats sa = track_cluster_stats(same, {0, 1});
  ClusterStats sb = track_cluster_stats(same, {2, 3});
  REQUIRE(merger_time(same, sa, sb).has_value());
  CHECK(*merger_time(same, sa, sb) == 0.0);

  // frozen distinct singletons never merge (strict inequality, zero spread)
  TrajectoryBundle frozen = bundle_1d({{0.0, 5.0}, {0.0, 5.0}});
  ClusterStats fa = track_cluster_stats(frozen, {0});
  ClusterStats fb = track_cluster_stats(frozen, {1});
  CHECK(!merger_time(frozen, fa, fb).has_value());
}

TEST_CASE("moment tensors match hand values", "[hierarchy]") {
  Matrix pts(2, 2);
  pts << 0.0, 0.0, 2.0, 0.0;
  Matrix m1 = moment_tensor(pts, 1);
  REQUIRE(m1.rows() == 2);
  CHECK(m1(0, 0) == 1.0);
  CHECK(m1(1, 0) == 0.0);

  Matrix m2 = moment_tensor(pts, 2);
  CHECK(m2(0, 0) == 1.0);
  CHECK(m2(0, 1) == 0.0);
  CHECK(m2(1, 0) == 0.0);
  CHECK(m2(1, 1) == 0.0);

  // second moments are translation invariant
  Matrix shifted = pts;
  shifted.col(0).array() += 5.0;
  shifted.col(1).array() += 7.0;
  CHECK((moment_tensor(shifted, 2) - m2).cwiseAbs().maxCoeff() == 0.0);

  Matrix one(1, 2);
  one << 4.0, -1.0;
  CHECK(moment_tensor(one, 1)(0, 0) == 4.0);
  CHECK_THROWS(moment_tensor(one, 2));
  CHECK_THROWS(moment_tensor(pts, 3));
  CHECK_THROWS(moment_tensor(Matrix(0, 2), 1));
}

TEST_CASE("staggered convergence produces ordered merge events", "[hierarchy]") {
  // four 2-point clusters in 1-D converging one after another
  TrajectoryBundle traj = bundle_1d({
      {-0.1, 0.1, 9.9, 10.1, 19.9, 20.1, 29.9, 30.1},
      {-0.1, 0.1, 0.0, 0.2, 19.9, 20.1, 29.9, 30.1},
      {-0.1, 0.1, 0.0, 0.2, 0.05, 0.25, 29.9, 30.1},
      {-0.1, 0.1, 0.0, 0.2, 0.05, 0.25, 0.1, 0.3},
  });
  std::vector<std::vector<std::size_t>> initial = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  Linkage linkage = build_dendrogram(traj, initial);
  REQUIRE(linkage.events.size() == 3);
  REQUIRE(linkage.leaves == std::vector<std::string>{"0", "1", "2", "3"});

  CHECK(linkage.events[0].left == 0);
  CHECK(linkage.events[0].right == 1);
  CHECK_THAT(linkage.events[0].time, WithinAbs(1.0 / 3.0, 1e-12));
  CHECK(linkage.events[0].size == 2);

  CHECK(linkage.events[1].left == 2);
  CHECK(linkage.events[1].right == 4);  // cluster 4 is the first merge product
  CHECK_THAT(linkage.events[1].time, WithinAbs(2.0 / 3.0, 1e-12));
  CHECK(linkage.events[1].size == 3);

  CHECK(linkage.events[2].left == 3);
  CHECK(linkage.events[2].right == 5);
  CHECK(linkage.events[2].time == 1.0);
  CHECK(linkage.events[2].size == 4);

  for (std::size_t m = 1; m < linkage.events.size(); ++m) {
    CHECK(linkage.events[m].time >= linkage.events[m - 1].time);
  }

  UltrametricReport report = check_ultrametric(linkage);
  CHECK(report.holds);
  CHECK(report.max_violation <= 0.0);

  // rebuilding gives the identical linkage
  Linkage again = build_dendrogram(traj, initial);
  CHECK(linkage_to_json(again).dump() == linkage_to_json(linkage).dump());
}

TEST_CASE("pairs that never merge close at the sentinel time", "[hierarchy]") {
  TrajectoryBundle traj = bundle_1d({{0.0, 10.0, 30.0}, {0.0, 10.0, 30.0}});
  Linkage linkage = build_dendrogram(traj, {{0}, {1}, {2}});
  REQUIRE(linkage.events.size() == 2);
  CHECK(linkage.events[0].left == 0);
  CHECK(linkage.events[0].right == 1);  // lexicographically smallest id pair
  CHECK(linkage.events[0].time == 1.0);
  CHECK(linkage.events[1].left == 2);
  CHECK(linkage.events[1].right == 3);
  CHECK(linkage.events[1].time == 1.0);
}

TEST_CASE("two initial clusters close with a single event", "[hierarchy]") {
  TrajectoryBundle traj = bundle_1d({{-1.0, 1.0, 4.0}, {-1.0, 1.0, 0.2}});
  Linkage linkage = build_dendrogram(traj, {{0, 1}, {2}}, {}, {"left", "right"});
  REQUIRE(linkage.events.size() == 1);
  CHECK(linkage.leaves == std::vector<std::string>{"left", "right"});
  CHECK(linkage.events[0].size == 2);
}

TEST_CASE("the mean-based criterion is available behind options", "[hierarchy]") {
  TrajectoryBundle traj = bundle_1d({
      {-0.1, 0.1, 9.9, 10.1},
      {-0.1, 0.1, 0.0, 0.2},
  });
  DendrogramOptions opt;
  opt.criterion = MergeCriterion::MomentFrobenius;
  opt.moment_order = 1;
  opt.moment_epsilon = 0.5;
  Linkage linkage = build_dendrogram(traj, {{0, 1}, {2, 3}}, opt);
  REQUIRE(linkage.events.size() == 1);
  CHECK(linkage.events[0].time == 1.0);  // centroids 0 vs 0.1 at the last frame

  // a huge tolerance merges everything at the first frame
  opt.moment_epsilon = 1e9;
  Linkage loose = build_dendrogram(traj, {{0, 1}, {2, 3}}, opt);
  CHECK(loose.events[0].time == 0.0);
}

TEST_CASE("cophenetic times replay the merge schedule", "[hierarchy]") {
  Linkage linkage;
  linkage.leaves = {"a", "b", "c"};
  linkage.events.push_back({0, 1, 0.2, 2});
  linkage.events.push_back({2, 3, 0.5, 3});
  Matrix times = cophenetic_times(linkage);
  REQUIRE(times.rows() == 3);
  CHECK(times(0, 1) == 0.2);
  CHECK(times(1, 0) == 0.2);
  CHECK(times(0, 2) == 0.5);
  CHECK(times(1, 2) == 0.5);
  CHECK(times(0, 0) == 0.0);
  CHECK(ultrametric_violation(times) == 0.0);
  CHECK(check_ultrametric(linkage).holds);
}

TEST_CASE("ultrametric violations measure the worst triple", "[hierarchy]") {
  Matrix times(3, 3);
  times << 0.0, 0.1, 0.9, 0.1, 0.0, 0.1, 0.9, 0.1, 0.0;
  CHECK_THAT(ultrametric_violation(times), WithinAbs(0.8, 1e-15));

  Matrix two(2, 2);
  two << 0.0, 0.4, 0.4, 0.0;
  CHECK(ultrametric_violation(two) == 0.0);  // no triples to violate
}

TEST_CASE("linkages survive a JSON round-trip", "[hierarchy]") {
  Linkage linkage;
  linkage.leaves = {"x", "y", "z"};
  linkage.events.push_back({0, 2, 0.25, 2});
  linkage.events.push_back({1, 3, 0.75, 3});
  Linkage back = linkage_from_json(linkage_to_json(linkage));
  CHECK(back.leaves == linkage.leaves);
  REQUIRE(back.events.size() == 2);
  CHECK(back.events[1].left == 1);
  CHECK(back.events[1].right == 3);
  CHECK(back.events[1].time == 0.75);
  CHECK(back.events[1].size == 3);
  CHECK(linkage_to_json(back).dump() == linkage_to_json(linkage).dump());
}

TEST_CASE("malformed cluster assignments are rejected", "[hierarchy]") {
  TrajectoryBundle traj = bundle_1d({{0.0, 1.0, 2.0}});
  CHECK_THROWS(build_dendrogram(traj, {{0, 1, 2}}));            // K < 2
  CHECK_THROWS(build_dendrogram(traj, {{0, 1}, {1, 2}}));       // overlap
  CHECK_THROWS(build_dendrogram(traj, {{0, 1}, {}}));           // empty cluster
  CHECK_THROWS(build_dendrogram(traj, {{0}, {1}, {2}, {3}}));   // index out of range
  CHECK_THROWS(build_dendrogram(traj, {{0}, {1}}, {}, {"only"}));  // label count
}
