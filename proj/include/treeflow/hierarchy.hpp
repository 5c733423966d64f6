#pragma once
// Dendrogram discovery from diffusion trajectories: per-cluster statistics
// over time, merger detection, agglomerative linkage with a monotone search
// window, ultrametric checking, and moment tensors.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeflow/diffusion.hpp"
#include "treeflow/linalg.hpp"

namespace treeflow {

struct ClusterStats {
  std::vector<std::size_t> members;
  Matrix centroids;  // [frames x d]
  Vector spreads;    // mean Euclidean distance from centroid, per frame
};

struct MergeEvent {
  int left = 0;   // smaller cluster id
  int right = 0;  // larger cluster id
  double time = 0.0;
  int size = 0;   // leaves under the merged cluster
};

struct Linkage {
  std::vector<std::string> leaves;  // initial leaf labels, ids 0..K-1
  std::vector<MergeEvent> events;   // event m creates cluster id K+m
};

inline ClusterStats track_cluster_stats(const TrajectoryBundle& traj,
                                        std::vector<std::size_t> members) {
  if (members.empty()) throw std::runtime_error("track_cluster_stats: empty member set");
  const int frames = traj.frames();
  const Eigen::Index d = traj.positions.front().cols();
  ClusterStats stats;
  stats.centroids.resize(frames, d);
  stats.spreads.resize(frames);
  for (int f = 0; f < frames; ++f) {
    const Matrix& pos = traj.positions[static_cast<std::size_t>(f)];
    Vector c = Vector::Zero(d);
    for (std::size_t m : members) c += pos.row(static_cast<Eigen::Index>(m)).transpose();
    c /= static_cast<double>(members.size());
    double spread = 0.0;
    for (std::size_t m : members) {
      spread += (pos.row(static_cast<Eigen::Index>(m)).transpose() - c).norm();
    }
    stats.centroids.row(f) = c.transpose();
    stats.spreads(f) = spread / static_cast<double>(members.size());
  }
  stats.members = std::move(members);
  return stats;
}

namespace detail {

// Earliest frame >= from with ||c_a - c_b|| < s_a + s_b (strict).
inline std::optional<int> merger_frame(const ClusterStats& a, const ClusterStats& b,
                                       int from) {
  if (a.centroids.rows() != b.centroids.rows()) {
    throw std::runtime_error("merger_time: clusters live on different time grids");
  }
  for (int f = std::max(from, 0); f < a.centroids.rows(); ++f) {
    const double dist = (a.centroids.row(f) - b.centroids.row(f)).norm();
    if (dist < a.spreads(f) + b.spreads(f)) return f;
  }
  return std::nullopt;
}

}  // namespace detail

// Earliest grid time at which two clusters become indistinguishable under
// the spread-sum criterion; absent when the criterion never fires.
inline std::optional<double> merger_time(const TrajectoryBundle& traj,
                                         const ClusterStats& a, const ClusterStats& b) {
  const std::optional<int> f = detail::merger_frame(a, b, 0);
  if (!f) return std::nullopt;
  return traj.times(*f);
}

// Mean (order 1) or centered covariance with divide-by-count (order 2).
inline Matrix moment_tensor(const Matrix& points, int order) {
  if (points.rows() < 1) throw std::runtime_error("moment_tensor: no points");
  const double n = static_cast<double>(points.rows());
  Vector mean = points.colwise().mean().transpose();
  if (order == 1) return mean;
  if (order == 2) {
    if (points.rows() < 2) throw std::runtime_error("moment_tensor: order 2 needs >= 2 points");
    Matrix centered = points.rowwise() - mean.transpose();
    return centered.transpose() * centered / n;
  }
  throw std::runtime_error("moment_tensor: unsupported order " + std::to_string(order));
}

enum class MergeCriterion { SpreadSum, MomentFrobenius };

struct DendrogramOptions {
  MergeCriterion criterion = MergeCriterion::SpreadSum;
  int moment_order = 2;        // MomentFrobenius only
  double moment_epsilon = 0.1; // Frobenius threshold for MomentFrobenius
};

namespace detail {

inline Matrix positions_of(const TrajectoryBundle& traj,
                           const std::vector<std::size_t>& members, int frame) {
  const Matrix& pos = traj.positions[static_cast<std::size_t>(frame)];
  Matrix out(static_cast<Eigen::Index>(members.size()), pos.cols());
  for (std::size_t i = 0; i < members.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = pos.row(static_cast<Eigen::Index>(members[i]));
  }
  return out;
}

inline std::optional<int> moment_merger_frame(const TrajectoryBundle& traj,
                                              const std::vector<std::size_t>& ma,
                                              const std::vector<std::size_t>& mb,
                                              int order, double epsilon, int from) {
  for (int f = std::max(from, 0); f < traj.frames(); ++f) {
    const Matrix pa = positions_of(traj, ma, f);
    const Matrix pb = positions_of(traj, mb, f);
    const double dist = (moment_tensor(pa, order) - moment_tensor(pb, order)).norm();
    if (dist < epsilon) return f;
  }
  return std::nullopt;
}

}  // namespace detail

// Agglomerative merge over trajectory time.  The candidate search window is
// restricted to frames at or after the last recorded event, which enforces
// non-decreasing event times; pairs that never satisfy the criterion merge
// at the sentinel time 1.0 (end of horizon), smallest-id pair first.
inline Linkage build_dendrogram(const TrajectoryBundle& traj,
                                const std::vector<std::vector<std::size_t>>& initial,
                                DendrogramOptions opt = {},
                                std::vector<std::string> leaf_labels = {}) {
  const std::size_t k = initial.size();
  if (k < 2) throw std::runtime_error("build_dendrogram: need K >= 2 clusters");
  {
    std::vector<char> seen(static_cast<std::size_t>(traj.positions.front().rows()), 0);
    for (const auto& c : initial) {
      if (c.empty()) throw std::runtime_error("build_dendrogram: empty cluster");
      for (std::size_t m : c) {
        if (m >= seen.size() || seen[m]) {
          throw std::runtime_error("build_dendrogram: clusters overlap or index invalid");
        }
        seen[m] = 1;
      }
    }
  }

  struct Active {
    int id;
    std::vector<std::size_t> members;
    ClusterStats stats;
    int leaf_count;
  };
  std::vector<Active> active;
  for (std::size_t c = 0; c < k; ++c) {
    active.push_back({static_cast<int>(c), initial[c],
                      track_cluster_stats(traj, initial[c]), 1});
  }

  Linkage linkage;
  if (leaf_labels.empty()) {
    for (std::size_t c = 0; c < k; ++c) linkage.leaves.push_back(std::to_string(c));
  } else {
    if (leaf_labels.size() != k) {
      throw std::runtime_error("build_dendrogram: leaf label count mismatch");
    }
    linkage.leaves = std::move(leaf_labels);
  }

  const int last_frame = traj.frames() - 1;
  int window_start = 0;
  int next_id = static_cast<int>(k);
  while (active.size() > 1) {
    int best_frame = std::numeric_limits<int>::max();
    std::pair<int, int> best_pair{std::numeric_limits<int>::max(),
                                  std::numeric_limits<int>::max()};
    std::size_t best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        std::optional<int> frame;
        if (opt.criterion == MergeCriterion::SpreadSum) {
          frame = detail::merger_frame(active[i].stats, active[j].stats, window_start);
        } else {
          frame = detail::moment_merger_frame(traj, active[i].members,
                                              active[j].members, opt.moment_order,
                                              opt.moment_epsilon, window_start);
        }
        if (!frame) continue;
        const std::pair<int, int> ids{std::min(active[i].id, active[j].id),
                                      std::max(active[i].id, active[j].id)};
        if (*frame < best_frame || (*frame == best_frame && ids < best_pair)) {
          best_frame = *frame;
          best_pair = ids;
          best_i = i;
          best_j = j;
        }
      }
    }

    double event_time;
    if (best_frame == std::numeric_limits<int>::max()) {
      // Never-merging pair: sentinel at the end of the horizon.
      for (std::size_t i = 0; i < active.size(); ++i) {
        for (std::size_t j = i + 1; j < active.size(); ++j) {
          const std::pair<int, int> ids{std::min(active[i].id, active[j].id),
                                        std::max(active[i].id, active[j].id)};
          if (ids < best_pair) {
            best_pair = ids;
            best_i = i;
            best_j = j;
          }
        }
      }
      event_time = 1.0;
      window_start = last_frame;
    } else {
      event_time = traj.times(best_frame);
      window_start = best_frame;
    }

    Active merged;
    merged.id = next_id++;
    merged.members = active[best_i].members;
    merged.members.insert(merged.members.end(), active[best_j].members.begin(),
                          active[best_j].members.end());
    std::sort(merged.members.begin(), merged.members.end());
    merged.stats = track_cluster_stats(traj, merged.members);
    merged.leaf_count = active[best_i].leaf_count + active[best_j].leaf_count;

    linkage.events.push_back(
        {best_pair.first, best_pair.second, event_time, merged.leaf_count});

    // Remove the higher vector index first to keep the other slot valid.
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(std::max(best_i, best_j)));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(std::min(best_i, best_j)));
    active.push_back(std::move(merged));
  }
  return linkage;
}

// Pairwise leaf merge times implied by a linkage: the event time at which two
// leaves first share a cluster.
inline Matrix cophenetic_times(const Linkage& linkage) {
  const std::size_t k = linkage.leaves.size();
  std::vector<std::vector<int>> cluster_leaves;  // by cluster id
  for (std::size_t c = 0; c < k; ++c) cluster_leaves.push_back({static_cast<int>(c)});

  Matrix times = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (const MergeEvent& e : linkage.events) {
    const auto& la = cluster_leaves[static_cast<std::size_t>(e.left)];
    const auto& lb = cluster_leaves[static_cast<std::size_t>(e.right)];
    for (int a : la) {
      for (int b : lb) {
        times(a, b) = e.time;
        times(b, a) = e.time;
      }
    }
    std::vector<int> merged = la;
    merged.insert(merged.end(), lb.begin(), lb.end());
    cluster_leaves.push_back(std::move(merged));
  }
  return times;
}

// Max over ordered leaf triples of t_ik - max(t_ij, t_jk).
inline double ultrametric_violation(const Matrix& times) {
  const Eigen::Index k = times.rows();
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j == i) continue;
      for (Eigen::Index l = 0; l < k; ++l) {
        if (l == i || l == j) continue;
        worst = std::max(worst, times(i, l) - std::max(times(i, j), times(j, l)));
      }
    }
  }
  return worst == -std::numeric_limits<double>::infinity() ? 0.0 : worst;
}

struct UltrametricReport {
  bool holds = false;
  double max_violation = 0.0;
};

inline UltrametricReport check_ultrametric(const Linkage& linkage,
                                           double tolerance = 0.0) {
  UltrametricReport report;
  report.max_violation = ultrametric_violation(cophenetic_times(linkage));
  report.holds = report.max_violation <= tolerance;
  return report;
}

inline nlohmann::json linkage_to_json(const Linkage& linkage) {
  nlohmann::json events = nlohmann::json::array();
  for (const MergeEvent& e : linkage.events) {
    events.push_back({{"left", e.left}, {"right", e.right}, {"time", e.time},
                      {"size", e.size}});
  }
  return nlohmann::json{{"leaves", linkage.leaves}, {"events", std::move(events)}};
}

inline Linkage linkage_from_json(const nlohmann::json& j) {
  Linkage linkage;
  linkage.leaves = j.at("leaves").get<std::vector<std::string>>();
  for (const auto& je : j.at("events")) {
    linkage.events.push_back({je.at("left").get<int>(), je.at("right").get<int>(),
                              je.at("time").get<double>(), je.at("size").get<int>()});
  }
  return linkage;
}

}  // namespace treeflow
