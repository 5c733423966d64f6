#pragma once
// Subcommand implementations behind the benchmark CLI.  Every run resolves a
// flat key=value configuration (defaults <- config file <- flag overrides),
// writes its JSON/CSV artifacts into the output directory, and records a
// manifest.json with the full resolved config, the seed, and a sha256 per
// deterministic artifact.  Files whose bytes contain wall-clock timings are
// listed separately as volatile; a run replayed from its manifest reproduces
// every checksummed artifact byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeflow/boosting.hpp"
#include "treeflow/dataset.hpp"
#include "treeflow/diffusion.hpp"
#include "treeflow/distill.hpp"
#include "treeflow/flow_matching.hpp"
#include "treeflow/hierarchy.hpp"
#include "treeflow/io.hpp"
#include "treeflow/metrics.hpp"
#include "treeflow/rng.hpp"
#include "treeflow/sha256.hpp"
#include "treeflow/tree.hpp"

namespace treeflow {

struct RunConfig {
  std::string command;
  std::string data;  // CSV path or builtin mixture name
  std::uint64_t seed = 0;
  std::string out;  // output directory
  std::map<std::string, std::string> config;  // resolved key=value settings
};

struct CommandResult {
  std::map<std::string, std::string> artifacts;  // file name -> sha256 of bytes
  std::vector<std::string> volatile_files;       // bytes include wall-clock values
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cfg {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Flat `key = value` text; '#' starts a comment, blank lines ignored.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::map<std::string, std::string> out;
  const std::string text = read_file_bytes(path);
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config " + path + " line " + std::to_string(line_no) +
                       ": expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw UsageError("config " + path + " line " + std::to_string(line_no) +
                       ": empty key");
    }
    out[key] = value;
  }
  return out;
}

inline int get_int(const std::map<std::string, std::string>& c, const std::string& key) {
  const std::string& v = c.at(key);
  try {
    std::size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("config key `" + key + "`: expected integer, got `" + v + "`");
  }
}

inline double get_double(const std::map<std::string, std::string>& c,
                         const std::string& key) {
  const std::string& v = c.at(key);
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key `" + key + "`: expected number, got `" + v + "`");
  }
}

inline bool get_bool(const std::map<std::string, std::string>& c, const std::string& key) {
  const std::string& v = c.at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key `" + key + "`: expected true/false, got `" + v + "`");
}

inline std::string get_str(const std::map<std::string, std::string>& c,
                           const std::string& key) {
  return c.at(key);
}

template <typename T, typename Parse>
inline std::vector<T> get_list(const std::map<std::string, std::string>& c,
                               const std::string& key, Parse parse) {
  const std::string& v = c.at(key);
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    std::size_t comma = v.find(',', pos);
    std::string item = trim(v.substr(pos, comma == std::string::npos ? comma : comma - pos));
    pos = comma == std::string::npos ? v.size() + 1 : comma + 1;
    if (item.empty()) continue;
    out.push_back(parse(key, item));
  }
  if (out.empty()) throw UsageError("config key `" + key + "`: empty list");
  return out;
}

inline std::vector<int> get_int_list(const std::map<std::string, std::string>& c,
                                     const std::string& key) {
  return get_list<int>(c, key, [](const std::string& k, const std::string& item) {
    std::map<std::string, std::string> one{{k, item}};
    return get_int(one, k);
  });
}

inline std::vector<double> get_double_list(const std::map<std::string, std::string>& c,
                                           const std::string& key) {
  return get_list<double>(c, key, [](const std::string& k, const std::string& item) {
    std::map<std::string, std::string> one{{k, item}};
    return get_double(one, k);
  });
}

// defaults completed by `overrides`; keys outside the default set are errors.
inline std::map<std::string, std::string> resolve(
    std::map<std::string, std::string> defaults,
    const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, value] : overrides) {
    auto it = defaults.find(key);
    if (it == defaults.end()) {
      throw UsageError("unknown config key `" + key + "`");
    }
    it->second = value;
  }
  return defaults;
}

}  // namespace cfg

namespace detail {

inline bool is_builtin_mixture(const std::string& name) {
  return name == "4_corners" || name == "9_grid" || name == "8_gaussians";
}

inline Dataset load_labeled(const RunConfig& rc) {
  if (is_builtin_mixture(rc.data)) {
    const int samples = cfg::get_int(rc.config, "samples");
    if (samples < 2) throw UsageError("config key `samples`: need at least 2");
    return make_named_blobs(rc.data, static_cast<std::size_t>(samples), rc.seed);
  }
  return load_csv(rc.data, cfg::get_str(rc.config, "label_column"));
}

inline std::vector<std::string> leaf_labels_of(const Dataset& ds) {
  if (ds.label_names.size() == static_cast<std::size_t>(ds.class_count)) {
    return ds.label_names;
  }
  std::vector<std::string> out;
  for (int c = 0; c < ds.class_count; ++c) out.push_back(std::to_string(c));
  return out;
}

inline void write_artifact(const RunConfig& rc, CommandResult& res,
                           const std::string& name, const std::string& bytes,
                           bool is_volatile = false) {
  write_text_file(rc.out + "/" + name, bytes);
  if (is_volatile) {
    res.volatile_files.push_back(name);
  } else {
    res.artifacts[name] = Sha256::hex(bytes);
  }
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// discover: train a denoising score network, run the learned forward SDE on
// every data point, build the merger-time dendrogram over the label groups,
// and dump reverse probability-flow snapshots at requested times.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> discover_defaults() {
  return {
      {"epochs", "400"},          {"batch", "128"},
      {"lr", "0.001"},            {"hidden", "128,128,128,128"},
      {"schedule_steps", "100"},  {"beta_start", "0.0001"},
      {"beta_end", "0.02"},       {"samples", "400"},
      {"label_column", "label"},  {"dump_at", "0.5"},
      {"pfode_samples", "400"},   {"allow_highdim", "false"},
      {"merge_criterion", "spread_sum"},
      {"moment_order", "2"},      {"moment_epsilon", "0.1"},
  };
}

inline CommandResult cmd_discover(const RunConfig& rc) {
  CommandResult res;
  const Dataset raw = detail::load_labeled(rc);
  if (raw.dim() > 2 && !cfg::get_bool(rc.config, "allow_highdim")) {
    throw UsageError("discover: data has " + std::to_string(raw.dim()) +
                     " features; pass --allow-highdim to proceed beyond 2-D");
  }
  if (raw.class_count < 2) {
    throw UsageError("discover: need at least 2 label groups to build a dendrogram");
  }
  auto [ds, stats] = standardize(raw);

  const BetaSchedule schedule =
      linear_beta_schedule(cfg::get_int(rc.config, "schedule_steps"),
                           cfg::get_double(rc.config, "beta_start"),
                           cfg::get_double(rc.config, "beta_end"));
  ScoreTrainConfig tc;
  tc.epochs = cfg::get_int(rc.config, "epochs");
  tc.batch = cfg::get_int(rc.config, "batch");
  tc.lr = cfg::get_double(rc.config, "lr");
  tc.seed = rc.seed;
  tc.hidden = cfg::get_int_list(rc.config, "hidden");
  ScoreTrainResult trained = train_score_net(ds, schedule, tc);

  const TrajectoryBundle forward =
      simulate_learned_forward(trained.net, ds.features, rc.seed);

  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(raw.class_count));
  for (std::size_t i = 0; i < raw.n(); ++i) {
    groups[static_cast<std::size_t>(raw.labels[i])].push_back(i);
  }
  DendrogramOptions opt;
  const std::string criterion = cfg::get_str(rc.config, "merge_criterion");
  if (criterion == "moment") {
    opt.criterion = MergeCriterion::MomentFrobenius;
    opt.moment_order = cfg::get_int(rc.config, "moment_order");
    opt.moment_epsilon = cfg::get_double(rc.config, "moment_epsilon");
  } else if (criterion != "spread_sum") {
    throw UsageError("config key `merge_criterion`: expected spread_sum or moment");
  }
  const Linkage linkage =
      build_dendrogram(forward, groups, opt, detail::leaf_labels_of(raw));
  detail::write_artifact(rc, res, "linkage.json",
                         detail::dump_json(linkage_to_json(linkage)));

  // Reverse probability-flow snapshots, mapped back to data units.
  const int n_samples = cfg::get_int(rc.config, "pfode_samples");
  if (n_samples < 1) throw UsageError("config key `pfode_samples`: need at least 1");
  Rng noise_rng = Rng::stream(rc.seed, "cli/pfode_noise");
  Matrix noise(n_samples, ds.features.cols());
  for (Eigen::Index r = 0; r < noise.rows(); ++r) {
    for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = noise_rng.normal();
  }
  const TrajectoryBundle reverse = reverse_pf_ode(trained.net, noise, schedule.n());
  for (double t : cfg::get_double_list(rc.config, "dump_at")) {
    if (t < 0.0 || t > 1.0) {
      throw UsageError("config key `dump_at`: times must lie in [0,1]");
    }
    std::size_t best = 0;
    for (std::size_t f = 1; f < reverse.times.size(); ++f) {
      if (std::abs(reverse.times[f] - t) < std::abs(reverse.times[best] - t)) best = f;
    }
    const Matrix snap = unstandardize(reverse.positions[best], stats);
    detail::write_artifact(rc, res, "snapshot_t" + format_double(t) + ".csv",
                           matrix_to_csv(raw.feature_names, snap));
  }
  return res;
}

// ---------------------------------------------------------------------------
// entropy: fit a deep classification tree and write the per-depth normalized
// label entropy next to the diffusion noise-fraction proxy, both expressed on
// a shared [0,1] coarse-graining axis (low -> high disorder), plus the mean
// feature vector ("prototype") of every tree node.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> entropy_defaults() {
  return {
      {"tree_depth", "15"},      {"min_samples_split", "2"},
      {"schedule_steps", "100"}, {"beta_start", "0.0001"},
      {"beta_end", "0.02"},      {"use_alpha_bar", "true"},
      {"label_column", "label"}, {"samples", "400"},
  };
}

inline CommandResult cmd_entropy(const RunConfig& rc) {
  CommandResult res;
  const Dataset ds = detail::load_labeled(rc);
  if (ds.class_count < 2) {
    throw UsageError("entropy: single-class data has no label entropy to trace");
  }
  const DecisionTree tree = fit_tree(ds, cfg::get_int(rc.config, "tree_depth"),
                                     cfg::get_int(rc.config, "min_samples_split"));
  const std::vector<double> by_depth = level_entropy(tree, ds);
  const BetaSchedule schedule =
      linear_beta_schedule(cfg::get_int(rc.config, "schedule_steps"),
                           cfg::get_double(rc.config, "beta_start"),
                           cfg::get_double(rc.config, "beta_end"));
  const Vector proxy =
      snr_entropy_proxy(schedule, cfg::get_bool(rc.config, "use_alpha_bar"));

  // Tree depths map onto the axis reversed (leaves at 0, root at 1) so that
  // both curves run from low disorder to high.
  std::string csv = "curve,axis,normalized_entropy\n";
  const int deepest = tree.max_depth;
  for (int d = deepest; d >= 0; --d) {
    const double axis =
        deepest == 0 ? 1.0 : 1.0 - static_cast<double>(d) / static_cast<double>(deepest);
    csv += "tree," + format_double(axis) + "," +
           format_double(by_depth[static_cast<std::size_t>(d)]) + "\n";
  }
  const int n = schedule.n();
  for (int i = 1; i <= n; ++i) {
    csv += "proxy," + format_double(static_cast<double>(i) / static_cast<double>(n)) +
           "," + format_double(proxy(i - 1)) + "\n";
  }
  detail::write_artifact(rc, res, "entropy_curves.csv", csv);

  std::vector<std::string> header{"node_id", "depth"};
  header.insert(header.end(), ds.feature_names.begin(), ds.feature_names.end());
  std::string protos;
  for (const auto& h : header) {
    if (!protos.empty()) protos += ",";
    protos += h;
  }
  protos += "\n";
  for (const TreeNode& node : tree.nodes) {
    const Vector proto = node_prototype(tree, ds, node.id);
    protos += std::to_string(node.id) + "," + std::to_string(node.depth);
    for (Eigen::Index c = 0; c < proto.size(); ++c) {
      protos += "," + format_double(proto(c));
    }
    protos += "\n";
  }
  detail::write_artifact(rc, res, "prototypes.csv", protos);
  return res;
}

// ---------------------------------------------------------------------------
// treeflow: stratified split, tree-conditioned flow-matching training, class-
// histogram-matched generation, and the four-metric evaluation repeated over
// consecutive seeds.  Deterministic metrics go to report.json; wall-clock
// runtimes go to timing.json, which is excluded from checksummed artifacts.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> treeflow_defaults() {
  return {
      {"tree_depth", "10"},     {"steps", "1000"},
      {"batch", "128"},         {"lr", "0.001"},
      {"weight_decay", "0.01"}, {"euler_steps", "50"},
      {"label_embed_dim", "16"},{"hidden", "512,512"},
      {"repeat", "5"},          {"test_fraction", "0.25"},
      {"per_example_t", "false"},
      {"label_column", "label"},{"samples", "400"},
  };
}

inline CommandResult cmd_treeflow(const RunConfig& rc) {
  CommandResult res;
  const Dataset raw = detail::load_labeled(rc);
  const int repeat = cfg::get_int(rc.config, "repeat");
  if (repeat < 1) throw UsageError("config key `repeat`: need at least 1");
  const double test_fraction = cfg::get_double(rc.config, "test_fraction");
  const std::string label_column = cfg::get_str(rc.config, "label_column");

  TreeFlowConfig base;
  base.tree_depth = cfg::get_int(rc.config, "tree_depth");
  base.steps = cfg::get_int(rc.config, "steps");
  base.batch = cfg::get_int(rc.config, "batch");
  base.lr = cfg::get_double(rc.config, "lr");
  base.weight_decay = cfg::get_double(rc.config, "weight_decay");
  base.euler_steps = cfg::get_int(rc.config, "euler_steps");
  base.label_embed_dim = cfg::get_int(rc.config, "label_embed_dim");
  base.hidden = cfg::get_int_list(rc.config, "hidden");
  base.per_example_t = cfg::get_bool(rc.config, "per_example_t");

  nlohmann::json per_seed = nlohmann::json::array();
  nlohmann::json per_seed_timing = nlohmann::json::array();
  std::vector<double> acc, wass, corr, runtime;

  for (int r = 0; r < repeat; ++r) {
    const std::uint64_t seed_r = rc.seed + static_cast<std::uint64_t>(r);
    auto [train_raw, test_raw] = train_test_split(raw, test_fraction, seed_r, true);
    auto [train, stats] = standardize(train_raw);
    const Dataset test = standardize(test_raw, stats).first;

    TreeFlowConfig tf = base;
    tf.seed = seed_r;

    auto [synth, seconds] = timed([&]() {
      TreeFlowTrainResult trained = train_treeflow(train, tf);
      std::vector<int> counts(static_cast<std::size_t>(train.class_count), 0);
      for (int y : train.labels) ++counts[static_cast<std::size_t>(y)];

      Dataset out;
      out.class_count = train.class_count;
      out.feature_names = train.feature_names;
      out.label_names = train.label_names;
      out.features.resize(static_cast<Eigen::Index>(train.n()), train.features.cols());
      out.labels.reserve(train.n());
      Rng seed_rng = Rng::stream(seed_r, "cli/generate");
      Eigen::Index row = 0;
      for (int c = 0; c < train.class_count; ++c) {
        const int n_c = counts[static_cast<std::size_t>(c)];
        const std::uint64_t gen_seed = seed_rng.next_u64();  // one draw per class
        if (n_c == 0) continue;
        const Matrix xc = generate(trained.model, train, c, std::nullopt, n_c,
                                   tf.euler_steps, gen_seed);
        out.features.middleRows(row, n_c) = xc;
        row += n_c;
        out.labels.insert(out.labels.end(), static_cast<std::size_t>(n_c), c);
      }
      return out;
    });

    EvalReport er;
    er.tstr_accuracy = tstr(synth, test);
    er.wasserstein = wasserstein_1d_mean(synth.features, test.features);
    er.correlation_error = correlation_error(synth.features, test.features);
    er.runtime_seconds = seconds;
    acc.push_back(er.tstr_accuracy);
    wass.push_back(er.wasserstein);
    corr.push_back(er.correlation_error);
    runtime.push_back(er.runtime_seconds);

    Dataset synth_raw = synth;
    synth_raw.features = unstandardize(synth.features, stats);
    detail::write_artifact(rc, res, "synthetic_seed" + std::to_string(r) + ".csv",
                           dataset_to_csv(synth_raw, label_column));

    per_seed.push_back(nlohmann::json{{"seed", seed_r},
                                      {"tstr_accuracy", er.tstr_accuracy},
                                      {"wasserstein", er.wasserstein},
                                      {"correlation_error", er.correlation_error}});
    per_seed_timing.push_back(
        nlohmann::json{{"seed", seed_r}, {"report", eval_report_to_json(er)}});
  }

  const nlohmann::json report{
      {"repeat", repeat},
      {"test_fraction", test_fraction},
      {"per_seed", per_seed},
      {"mean",
       {{"tstr_accuracy", detail::mean_of(acc)},
        {"wasserstein", detail::mean_of(wass)},
        {"correlation_error", detail::mean_of(corr)}}},
      {"std",
       {{"tstr_accuracy", detail::std_of(acc)},
        {"wasserstein", detail::std_of(wass)},
        {"correlation_error", detail::std_of(corr)}}}};
  detail::write_artifact(rc, res, "report.json", detail::dump_json(report));

  const nlohmann::json timing{{"per_seed", per_seed_timing},
                              {"runtime_seconds_mean", detail::mean_of(runtime)},
                              {"runtime_seconds_std", detail::std_of(runtime)}};
  detail::write_artifact(rc, res, "timing.json", detail::dump_json(timing),
                         /*is_volatile=*/true);
  return res;
}

// ---------------------------------------------------------------------------
// distill: forest oracle -> base tree teacher -> level-conditioned split
// network student; reports teacher/student classification quality, their
// accuracy gap, and exact path agreement on the held-out split.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> distill_defaults() {
  return {
      {"oracle_trees", "100"},   {"oracle_depth", "15"},
      {"teacher_depth", "15"},   {"steps", "30000"},
      {"batch", "256"},          {"lr", "0.001"},
      {"level_embed_dim", "32"}, {"hidden", "256,256"},
      {"test_fraction", "0.25"}, {"label_column", "label"},
      {"samples", "400"},
  };
}

inline CommandResult cmd_distill(const RunConfig& rc) {
  CommandResult res;
  const Dataset raw = detail::load_labeled(rc);
  auto [train_raw, test_raw] =
      train_test_split(raw, cfg::get_double(rc.config, "test_fraction"), rc.seed, true);
  auto [train, stats] = standardize(train_raw);
  const Dataset test = standardize(test_raw, stats).first;

  DsmConfig dc;
  dc.oracle_trees = cfg::get_int(rc.config, "oracle_trees");
  dc.oracle_depth = cfg::get_int(rc.config, "oracle_depth");
  dc.teacher_depth = cfg::get_int(rc.config, "teacher_depth");
  dc.steps = cfg::get_int(rc.config, "steps");
  dc.batch = cfg::get_int(rc.config, "batch");
  dc.lr = cfg::get_double(rc.config, "lr");
  dc.seed = rc.seed;
  dc.level_embed_dim = cfg::get_int(rc.config, "level_embed_dim");
  dc.hidden = cfg::get_int_list(rc.config, "hidden");

  const Teacher teacher = make_teacher(train, dc);
  SplitTrainResult student = train_split_model(train, teacher.tree, dc);

  std::vector<int> teacher_pred;
  teacher_pred.reserve(test.n());
  for (std::size_t i = 0; i < test.n(); ++i) {
    teacher_pred.push_back(
        predict(teacher.tree, test.features.row(static_cast<Eigen::Index>(i))).label);
  }
  const std::vector<int> student_pred =
      infer_paths_batch(student.model, teacher.tree, test.features);

  const ClassReport teacher_report =
      classification_report(test.labels, teacher_pred, test.class_count);
  const ClassReport student_report =
      classification_report(test.labels, student_pred, test.class_count);
  const double agreement = path_agreement(student.model, teacher.tree, test);

  const nlohmann::json report{
      {"teacher", class_report_to_json(teacher_report)},
      {"student", class_report_to_json(student_report)},
      {"gap", student_report.accuracy - teacher_report.accuracy},
      {"path_agreement", agreement},
      {"steps", dc.steps},
      {"seed", rc.seed}};
  detail::write_artifact(rc, res, "report.json", detail::dump_json(report));
  return res;
}

// ---------------------------------------------------------------------------
// boost: squared-error gradient boosting trace on a regression CSV, one row
// per stage: residual objective value and partition cell count.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> boost_defaults() {
  return {
      {"stages", "20"},           {"eta", "1"},
      {"weak_depth", "3"},        {"min_samples_split", "2"},
      {"target_column", "target"},
  };
}

inline CommandResult cmd_boost(const RunConfig& rc) {
  CommandResult res;
  const int stages = cfg::get_int(rc.config, "stages");
  if (stages < 1) {
    throw UsageError("boost: `stages` must be at least 1");
  }
  if (detail::is_builtin_mixture(rc.data)) {
    throw UsageError("boost: needs a regression CSV, not a builtin mixture");
  }
  const RegressionFrame frame =
      load_csv_regression(rc.data, cfg::get_str(rc.config, "target_column"));
  const BoostedEnsemble model =
      fit_boosted(frame.features, frame.targets, stages,
                  cfg::get_double(rc.config, "eta"),
                  cfg::get_int(rc.config, "weak_depth"),
                  cfg::get_int(rc.config, "min_samples_split"));

  std::string csv = "stage,dgtsm,partition_cells\n";
  for (std::size_t m = 0; m < model.dgtsm_trace.size(); ++m) {
    csv += std::to_string(m + 1) + "," + format_double(model.dgtsm_trace[m]) + "," +
           std::to_string(model.partition_trace[m]) + "\n";
  }
  detail::write_artifact(rc, res, "boost_trace.csv", csv);
  return res;
}

// ---------------------------------------------------------------------------
// Dispatch, manifests, and manifest-driven replay.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> command_defaults(const std::string& command) {
  if (command == "discover") return discover_defaults();
  if (command == "entropy") return entropy_defaults();
  if (command == "treeflow") return treeflow_defaults();
  if (command == "distill") return distill_defaults();
  if (command == "boost") return boost_defaults();
  throw UsageError("unknown command `" + command + "`");
}

inline nlohmann::json manifest_json(const RunConfig& rc, const CommandResult& res) {
  return nlohmann::json{{"command", rc.command}, {"data", rc.data},
                        {"seed", rc.seed},       {"config", rc.config},
                        {"artifacts", res.artifacts},
                        {"volatile", res.volatile_files}};
}

// Resolves the config against the command's defaults, runs the command, and
// writes manifest.json beside the artifacts.  Returns the result with the
// fully resolved config written back into `rc`.
inline CommandResult run_command(RunConfig& rc) {
  rc.config = cfg::resolve(command_defaults(rc.command), rc.config);
  ensure_dir(rc.out);
  CommandResult res;
  if (rc.command == "discover") res = cmd_discover(rc);
  else if (rc.command == "entropy") res = cmd_entropy(rc);
  else if (rc.command == "treeflow") res = cmd_treeflow(rc);
  else if (rc.command == "distill") res = cmd_distill(rc);
  else if (rc.command == "boost") res = cmd_boost(rc);
  else throw UsageError("unknown command `" + rc.command + "`");
  write_text_file(rc.out + "/manifest.json", detail::dump_json(manifest_json(rc, res)));
  return res;
}

// Reconstructs a runnable config from a previous run's manifest.
inline RunConfig run_config_from_manifest(const std::string& manifest_path,
                                          const std::string& out_dir) {
  const nlohmann::json j = nlohmann::json::parse(read_file_bytes(manifest_path));
  RunConfig rc;
  rc.command = j.at("command").get<std::string>();
  rc.data = j.at("data").get<std::string>();
  rc.seed = j.at("seed").get<std::uint64_t>();
  rc.out = out_dir;
  rc.config = j.at("config").get<std::map<std::string, std::string>>();
  return rc;
}

struct RerunOutcome {
  bool all_match = true;
  std::vector<std::string> mismatched;  // artifact names whose bytes changed
};

// Replays the manifested run into `out_dir` and compares each deterministic
// artifact's checksum against the manifest's record.
inline RerunOutcome rerun_from_manifest(const std::string& manifest_path,
                                        const std::string& out_dir) {
  const nlohmann::json j = nlohmann::json::parse(read_file_bytes(manifest_path));
  const auto expected = j.at("artifacts").get<std::map<std::string, std::string>>();
  RunConfig rc = run_config_from_manifest(manifest_path, out_dir);
  const CommandResult res = run_command(rc);

  RerunOutcome outcome;
  for (const auto& [name, hash] : expected) {
    auto it = res.artifacts.find(name);
    if (it == res.artifacts.end() || it->second != hash) {
      outcome.all_match = false;
      outcome.mismatched.push_back(name);
    }
  }
  for (const auto& [name, hash] : res.artifacts) {
    if (expected.find(name) == expected.end()) {
      outcome.all_match = false;
      outcome.mismatched.push_back(name);
    }
  }
  return outcome;
}

}  // namespace treeflow
