#pragma once
// Dataset ingestion, synthetic blob generation, standardization, splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeflow/linalg.hpp"
#include "treeflow/rng.hpp"

namespace treeflow {

// Labeled tabular data.  Immutable by convention after construction.
struct Dataset {
  Matrix features;                         // [n_samples x n_features]
  std::vector<int> labels;                 // class ids in [0, class_count)
  std::vector<std::string> feature_names;  // [n_features]
  int class_count = 0;
  // Original label spellings by class id; empty when labels were synthesized.
  std::vector<std::string> label_names;

  std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
};

// Regression table: numeric target instead of factorized classes.
struct RegressionFrame {
  Matrix features;
  Vector targets;
  std::vector<std::string> feature_names;
  std::string target_name;
};

// Per-feature first and second moments for z-scoring.
struct ScalerStats {
  Vector mean;
  Vector std;  // strictly positive; zero-variance features recorded as 1
};

// Synthetic Gaussian mixture request.
struct BlobSpec {
  std::vector<Vector> centers;
  std::vector<double> std_dev;  // one entry per center
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  static BlobSpec uniform(std::vector<Vector> centers, double std_dev,
                          std::size_t samples, std::uint64_t seed) {
    BlobSpec s;
    s.std_dev.assign(centers.size(), std_dev);
    s.centers = std::move(centers);
    s.samples = samples;
    s.seed = seed;
    return s;
  }
};

namespace detail {

inline double parse_number(const std::string& cell, std::size_t row,
                           const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  // Tolerate surrounding spaces, which hand-edited CSVs often carry.
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r'))
    --last;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw std::runtime_error("non-numeric feature cell '" + cell + "' at row " +
                             std::to_string(row) + ", column '" + column + "'");
  }
  if (!std::isfinite(value)) {
    throw std::runtime_error("non-finite feature cell '" + cell + "' at row " +
                             std::to_string(row) + ", column '" + column + "'");
  }
  return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline RawTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path);
  for (auto& h : split_csv_line(line)) t.header.push_back(strip(h));
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    t.rows.push_back(split_csv_line(line));
    if (t.rows.back().size() != t.header.size()) {
      throw std::runtime_error("row " + std::to_string(t.rows.size()) +
                               " has " + std::to_string(t.rows.back().size()) +
                               " cells, header has " +
                               std::to_string(t.header.size()));
    }
  }
  if (t.rows.empty()) throw std::runtime_error("CSV has no data rows: " + path);
  return t;
}

}  // namespace detail

// Reads a classification table.  Numeric columns become features in header
// order; the label column is factorized to 0..K-1 by first appearance.
inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        std::optional<int> class_count = std::nullopt) {
  detail::RawTable t = detail::read_table(path);
  std::ptrdiff_t label_idx = -1;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c] == label_column) {
      label_idx = static_cast<std::ptrdiff_t>(c);
      break;
    }
  }
  if (label_idx < 0) {
    throw std::runtime_error("unknown label column '" + label_column + "' in " + path);
  }

  Dataset ds;
  const std::size_t n = t.rows.size();
  const std::size_t d = t.header.size() - 1;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.resize(n);
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (static_cast<std::ptrdiff_t>(c) != label_idx) ds.feature_names.push_back(t.header[c]);
  }

  std::map<std::string, int> label_ids;  // value -> id, first-appearance order
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      const std::string cell = detail::strip(t.rows[r][c]);
      if (static_cast<std::ptrdiff_t>(c) == label_idx) {
        auto it = label_ids.find(cell);
        if (it == label_ids.end()) {
          int id = static_cast<int>(label_ids.size());
          it = label_ids.emplace(cell, id).first;
          ds.label_names.push_back(cell);
        }
        ds.labels[r] = it->second;
      } else {
        // Row numbers in errors are 1-based data rows (header not counted).
        ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f++)) =
            detail::parse_number(cell, r + 1, t.header[c]);
      }
    }
  }
  const int observed = static_cast<int>(label_ids.size());
  if (class_count.has_value()) {
    if (*class_count < observed) {
      throw std::runtime_error("class_count " + std::to_string(*class_count) +
                               " smaller than observed class count " +
                               std::to_string(observed));
    }
    ds.class_count = *class_count;
    ds.label_names.resize(static_cast<std::size_t>(*class_count));
  } else {
    ds.class_count = observed;
  }
  return ds;
}

// Reads a regression table: every non-target column must be numeric and the
// target column itself is parsed as a real number.
inline RegressionFrame load_csv_regression(const std::string& path,
                                           const std::string& target_column) {
  detail::RawTable t = detail::read_table(path);
  std::ptrdiff_t target_idx = -1;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c] == target_column) target_idx = static_cast<std::ptrdiff_t>(c);
  }
  if (target_idx < 0) {
    throw std::runtime_error("unknown target column '" + target_column + "' in " + path);
  }
  RegressionFrame fr;
  fr.target_name = target_column;
  const std::size_t n = t.rows.size();
  const std::size_t d = t.header.size() - 1;
  fr.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  fr.targets.resize(static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (static_cast<std::ptrdiff_t>(c) != target_idx) fr.feature_names.push_back(t.header[c]);
  }
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      const double v = detail::parse_number(detail::strip(t.rows[r][c]), r + 1, t.header[c]);
      if (static_cast<std::ptrdiff_t>(c) == target_idx) {
        fr.targets(static_cast<Eigen::Index>(r)) = v;
      } else {
        fr.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f++)) = v;
      }
    }
  }
  return fr;
}

// Samples a Gaussian mixture; label = center index.  Counts are split as
// evenly as possible, remainder going to the lowest-index centers.
inline Dataset make_blobs(const BlobSpec& spec) {
  if (spec.centers.empty()) throw std::runtime_error("make_blobs: zero centers");
  if (spec.std_dev.size() != spec.centers.size()) {
    throw std::runtime_error("make_blobs: std_dev count must match center count");
  }
  const std::size_t k = spec.centers.size();
  const std::size_t dim = static_cast<std::size_t>(spec.centers.front().size());
  for (const auto& c : spec.centers) {
    if (static_cast<std::size_t>(c.size()) != dim) {
      throw std::runtime_error("make_blobs: centers of mixed dimensionality");
    }
  }
  for (double s : spec.std_dev) {
    if (s < 0.0) throw std::runtime_error("make_blobs: negative std_dev");
  }

  Dataset ds;
  ds.class_count = static_cast<int>(k);
  ds.features.resize(static_cast<Eigen::Index>(spec.samples), static_cast<Eigen::Index>(dim));
  ds.labels.resize(spec.samples);
  for (std::size_t f = 0; f < dim; ++f) ds.feature_names.push_back("x" + std::to_string(f));

  Rng rng = Rng::stream(spec.seed, "data/make_blobs");
  std::size_t row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t count = spec.samples / k + (c < spec.samples % k ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      for (std::size_t f = 0; f < dim; ++f) {
        ds.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(f)) =
            spec.centers[c](static_cast<Eigen::Index>(f)) + spec.std_dev[c] * rng.normal();
      }
      ds.labels[row] = static_cast<int>(c);
    }
  }
  return ds;
}

// Named mixtures used throughout the experiments.
inline Dataset make_named_blobs(const std::string& name, std::size_t samples,
                                std::uint64_t seed) {
  auto pt = [](double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
  };
  if (name == "4_corners") {
    return make_blobs(BlobSpec::uniform(
        {pt(-2, -2), pt(-2, 2), pt(2, -2), pt(2, 2)}, 0.3, samples, seed));
  }
  if (name == "9_grid") {
    std::vector<Vector> centers;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) centers.push_back(pt(2.0 * i, 2.0 * j));
    return make_blobs(BlobSpec::uniform(std::move(centers), 0.25, samples, seed));
  }
  if (name == "8_gaussians") {
    std::vector<Vector> centers;
    for (int i = 0; i < 8; ++i) {
      const double a = 2.0 * std::numbers::pi * i / 8.0;
      centers.push_back(pt(2.0 * std::cos(a), 2.0 * std::sin(a)));
    }
    return make_blobs(BlobSpec::uniform(std::move(centers), 0.15, samples, seed));
  }
  throw std::runtime_error("unknown blob spec name: " + name);
}

// Z-scores a dataset.  Without stats, fits per-feature mean and population
// std on `ds` (std 0 replaced by 1); with stats, applies them unchanged.
inline std::pair<Dataset, ScalerStats> standardize(
    const Dataset& ds, std::optional<ScalerStats> stats = std::nullopt) {
  const Eigen::Index d = ds.features.cols();
  ScalerStats st;
  if (stats.has_value()) {
    if (stats->mean.size() != d || stats->std.size() != d) {
      throw std::runtime_error("standardize: stats dimension mismatch");
    }
    st = *stats;
  } else {
    st.mean = ds.features.colwise().mean();
    st.std.resize(d);
    const double n = static_cast<double>(ds.features.rows());
    for (Eigen::Index c = 0; c < d; ++c) {
      const double var =
          (ds.features.col(c).array() - st.mean(c)).square().sum() / n;
      const double sd = std::sqrt(var);
      st.std(c) = sd > 0.0 ? sd : 1.0;
    }
  }
  Dataset out = ds;
  out.features = (ds.features.rowwise() - st.mean.transpose()).array().rowwise() /
                 st.std.transpose().array();
  return {std::move(out), std::move(st)};
}

// Inverts standardize for data scaled with `stats`.
inline Matrix unstandardize(const Matrix& features, const ScalerStats& stats) {
  return (features.array().rowwise() * stats.std.transpose().array()).matrix()
             .rowwise() +
         stats.mean.transpose();
}

namespace detail {

inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.feature_names = ds.feature_names;
  out.class_count = ds.class_count;
  out.label_names = ds.label_names;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), ds.features.cols());
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        ds.features.row(static_cast<Eigen::Index>(idx[i]));
    out.labels[i] = ds.labels[idx[i]];
  }
  return out;
}

}  // namespace detail

// Seeded disjoint split.  Stratified mode allocates round(test_fraction * n_k)
// test rows per class (at least 1), preserving proportions within one sample.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds,
                                                    double test_fraction,
                                                    std::uint64_t seed,
                                                    bool stratified) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::runtime_error("train_test_split: fraction must lie in (0,1)");
  }
  const std::size_t n = ds.n();
  Rng rng = Rng::stream(seed, "data/train_test_split");
  std::vector<std::size_t> test_idx;

  if (stratified) {
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(ds.class_count));
    for (std::size_t i = 0; i < n; ++i)
      by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      auto& rows = by_class[k];
      if (rows.empty()) continue;
      if (rows.size() < 2) {
        throw std::runtime_error("train_test_split: class " + std::to_string(k) +
                                 " has fewer than 2 samples under stratification");
      }
      std::size_t take = static_cast<std::size_t>(
          std::llround(test_fraction * static_cast<double>(rows.size())));
      take = std::clamp<std::size_t>(take, 1, rows.size() - 1);
      std::vector<std::size_t> perm = rng.permutation(rows.size());
      for (std::size_t i = 0; i < take; ++i) test_idx.push_back(rows[perm[i]]);
    }
  } else {
    std::size_t take = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(n)));
    take = std::clamp<std::size_t>(take, 1, n - 1);
    std::vector<std::size_t> perm = rng.permutation(n);
    test_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
  }

  std::sort(test_idx.begin(), test_idx.end());
  std::vector<char> in_test(n, 0);
  for (std::size_t i : test_idx) in_test[i] = 1;
  std::vector<std::size_t> train_idx;
  train_idx.reserve(n - test_idx.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!in_test[i]) train_idx.push_back(i);
  if (train_idx.empty() || test_idx.empty()) {
    throw std::runtime_error("train_test_split: a split came out empty");
  }
  return {detail::take_rows(ds, train_idx), detail::take_rows(ds, test_idx)};
}

}  // namespace treeflow
