#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgbdreg/alignment.hpp"
#include "rgbdreg/camera.hpp"
#include "rgbdreg/correspondence.hpp"
#include "rgbdreg/descriptor.hpp"
#include "rgbdreg/error.hpp"
#include "rgbdreg/evaluation.hpp"
#include "rgbdreg/random.hpp"
#include "rgbdreg/renderer.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg {

namespace fs = std::filesystem;

/// Full-model defaults: k = 400, 100 subsets of 20, cross rendering, ratio
/// test on, loss weights (1, 1, 0.1).
struct PipelineConfig {
  /// "patch" or "file:<dir>" where <dir> holds 0.rfm and 1.rfm.
  std::string descriptor = "patch";
  DescriptorConfig descriptor_config;
  int top_k = kDefaultTopK;
  FitConfig fit = FitConfig::inference();
  RenderMode render_mode = RenderMode::kCross;
  RenderConfig render;
  bool ratio_test = true;
  LossWeights loss_weights;
  /// Fraction of valid frame-1 points whose feature is overwritten with the
  /// feature of another random frame-1 point (repetitive-structure outliers).
  double outlier_feature_fraction = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T x{};
  if (!(is >> x) || !is.eof()) {
    throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
  }
  return x;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline RenderMode parse_render_mode(const std::string& s) {
  if (s == "cross") return RenderMode::kCross;
  if (s == "joint") return RenderMode::kJoint;
  throw ConfigError("render mode must be 'cross' or 'joint', got '" + s + "'");
}

inline const char* to_string(RenderMode m) { return m == RenderMode::kCross ? "cross" : "joint"; }

/// Applies one `key = value` setting.
inline void apply_setting(PipelineConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  if (key == "descriptor") c.descriptor = value;
  else if (key == "feature_dim") c.descriptor_config.dim = parse_number<int>(key, value);
  else if (key == "k") c.top_k = parse_number<int>(key, value);
  else if (key == "subsets") c.fit.num_subsets = parse_number<int>(key, value);
  else if (key == "subset_size") c.fit.subset_size = parse_number<int>(key, value);
  else if (key == "randomized") c.fit.use_randomization = parse_bool(key, value);
  else if (key == "ratio_test") c.ratio_test = parse_bool(key, value);
  else if (key == "render_mode") c.render_mode = parse_render_mode(value);
  else if (key == "splat_radius") c.render.splat_radius = parse_number<int>(key, value);
  else if (key == "photometric_weight") c.loss_weights.photometric = parse_number<double>(key, value);
  else if (key == "depth_weight") c.loss_weights.depth = parse_number<double>(key, value);
  else if (key == "correspondence_weight")
    c.loss_weights.correspondence = parse_number<double>(key, value);
  else if (key == "outlier_features") c.outlier_feature_fraction = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "error_normalization") {
    if (value == "count") c.fit.normalization = ErrorNormalization::kCount;
    else if (value == "weight_sum") c.fit.normalization = ErrorNormalization::kWeightSum;
    else throw ConfigError("error_normalization must be 'count' or 'weight_sum'");
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

/// Plain `key = value` lines; `#` starts a comment.
inline void apply_config_text(PipelineConfig& c, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void validate(const PipelineConfig& c) {
  if (c.top_k <= 0 || c.top_k % 2) throw ConfigError("k must be a positive even number");
  if (c.fit.num_subsets < 1) throw ConfigError("subsets must be positive");
  if (c.fit.subset_size < 3) throw ConfigError("subset_size must be at least 3");
  if (!(c.outlier_feature_fraction >= 0.0 && c.outlier_feature_fraction <= 1.0)) {
    throw ConfigError("outlier_features must lie in [0, 1]");
  }
  if (c.descriptor != "patch" && c.descriptor.rfind("file:", 0) != 0) {
    throw ConfigError("descriptor must be 'patch' or 'file:<dir>'");
  }
}

/// Overwrites the features of a seeded random subset of valid points with
/// copies of other valid points' features.
inline void plant_outlier_features(FeaturePointCloud& cloud, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0) return;
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) valid.push_back(i);
  if (valid.size() < 2) return;
  std::mt19937_64 rng(splitmix64(seed ^ 0x0071e75ULL));
  const auto count = static_cast<std::size_t>(fraction * static_cast<double>(valid.size()));
  const FeatureMatrix original = cloud.features;
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t slot = n + uniform_below(rng, valid.size() - n);
    std::swap(valid[n], valid[slot]);
    std::size_t source = valid[uniform_below(rng, valid.size())];
    if (source == valid[n]) source = valid[(n + 1) % valid.size()];
    cloud.features.row(static_cast<Eigen::Index>(valid[n])) =
        original.row(static_cast<Eigen::Index>(source));
  }
}

/// Runs one pipeline stage; library errors are re-raised with the stage name
/// prepended and their kind preserved.
template <typename F>
auto run_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

/// Feature clouds and correspondences of a pair; everything upstream of fitting.
struct MatchedPair {
  FeaturePointCloud cloud0;
  FeaturePointCloud cloud1;
  /// p in frame 1, q in frame 0: fitting maps frame-0 points into frame 1.
  CorrespondenceSet correspondences;
  std::map<std::string, double> time_ms;
};

struct PairFeatures {
  FeatureMap features0;
  FeatureMap features1;
};

inline PairFeatures load_pair_features(const std::string& descriptor, const RGBDFrame& f0,
                                       const RGBDFrame& f1) {
  const fs::path dir = descriptor.substr(5);
  return {load_feature_map(dir / "0.rfm", {f0.width(), f0.height(), 0}),
          load_feature_map(dir / "1.rfm", {f1.width(), f1.height(), 0})};
}

inline MatchedPair match_frames(const RGBDFrame& frame0, const RGBDFrame& frame1,
                                const PipelineConfig& config,
                                const PairFeatures* external = nullptr) {
  validate(config);
  MatchedPair out;
  auto start = Clock::now();
  run_stage("descriptor", [&] {
    PairFeatures features;
    if (external) {
      features = *external;
    } else if (config.descriptor == "patch") {
      features = {extract_features(frame0.color(), config.descriptor_config),
                  extract_features(frame1.color(), config.descriptor_config)};
    } else {
      features = load_pair_features(config.descriptor, frame0, frame1);
    }
    out.cloud0 = build_feature_cloud(frame0, features.features0);
    out.cloud1 = build_feature_cloud(frame1, features.features1);
    plant_outlier_features(out.cloud1, config.outlier_feature_fraction, config.seed);
    return 0;
  });
  out.time_ms["descriptor"] = elapsed_ms(start);

  start = Clock::now();
  out.correspondences = run_stage("correspondence", [&] {
    return extract_correspondences(out.cloud1, out.cloud0, config.top_k,
                                   config.ratio_test ? WeightMode::kRatio : WeightMode::kDistance);
  });
  out.time_ms["correspondence"] = elapsed_ms(start);
  return out;
}

/// Fits with the configured strategy; a subset size above |M| is reduced to |M|.
inline FitResult fit_matches(const CorrespondenceSet& m, const PipelineConfig& config) {
  FitConfig fit = config.fit;
  fit.seed = config.seed;
  if (static_cast<std::size_t>(fit.subset_size) > m.size()) {
    fit.subset_size = static_cast<int>(m.size());
  }
  return randomized_fit(m.entries, fit);
}

struct PairResult {
  RigidTransform estimate;  ///< frame-0 coordinates into frame-1 coordinates
  CorrespondenceSet correspondences;
  FitResult fit;
  LossReport losses;
  std::map<std::string, double> time_ms;
  std::vector<Vec3> points0;  ///< valid frame-0 points
  std::vector<Vec3> points1;  ///< valid frame-1 points
};

inline std::vector<Vec3> valid_points(const FeaturePointCloud& c) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.valid[i]) out.push_back(c.positions[i]);
  return out;
}

inline LossReport pair_losses(const MatchedPair& m, const RGBDFrame& frame0, const RGBDFrame& frame1,
                              const RigidTransform& estimate, double correspondence_error,
                              const PipelineConfig& config) {
  const auto [view0, view1] = cross_render(m.cloud0, m.cloud1, estimate, frame0.intrinsics(),
                                           config.render_mode, config.render);
  const RenderedView views[] = {{&view0, &frame0}, {&view1, &frame1}};
  return consistency_losses(views, correspondence_error, config.loss_weights);
}

/// descriptor -> correspondences -> randomized fit -> cross rendering losses.
inline PairResult register_frames(const RGBDFrame& frame0, const RGBDFrame& frame1,
                                  const PipelineConfig& config,
                                  const PairFeatures* external = nullptr) {
  MatchedPair matched = match_frames(frame0, frame1, config, external);
  PairResult out;
  out.time_ms = matched.time_ms;

  auto start = Clock::now();
  out.fit = run_stage("alignment", [&] { return fit_matches(matched.correspondences, config); });
  out.estimate = out.fit.transform;
  out.time_ms["alignment"] = elapsed_ms(start);

  start = Clock::now();
  out.losses = run_stage("render", [&] {
    return pair_losses(matched, frame0, frame1, out.estimate, out.fit.full_set_weighted_error,
                       config);
  });
  out.time_ms["render"] = elapsed_ms(start);

  out.points0 = valid_points(matched.cloud0);
  out.points1 = valid_points(matched.cloud1);
  out.correspondences = std::move(matched.correspondences);
  return out;
}

inline RegistrationReport evaluate_estimate(const RigidTransform& estimate,
                                            const RigidTransform& truth,
                                            std::span<const Vec3> points0,
                                            std::span<const Vec3> points1, std::uint64_t seed) {
  return make_report(rotation_error(estimate.rotation(), truth.rotation()),
                     translation_error(estimate.translation(), truth.translation()),
                     alignment_chamfer(points0, points1, estimate, truth, seed));
}

inline RegistrationReport evaluate_pair(const PairResult& r, const RigidTransform& truth,
                                        std::uint64_t seed) {
  RegistrationReport report = evaluate_estimate(r.estimate, truth, r.points0, r.points1, seed);
  report.time_ms = r.time_ms;
  return report;
}

struct SweepRow {
  int subsets = 0;
  AggregateSummary summary;
  double mean_fit_ms = 0.0;
  double mean_total_ms = 0.0;
};

inline const std::vector<int> kDefaultSubsetSweep{5, 10, 20, 50, 100, 200};

/// A frame pair with its ground-truth relative pose.
struct LabeledPair {
  RGBDFrame frame0;
  RGBDFrame frame1;
  RigidTransform truth;
};

/// Subset-count sweep. Matching runs once per pair; every row reuses the same
/// correspondences and fit seed, so a larger count sees a superset of the
/// smaller count's subsets. Fit time per pair is the fastest of `repeats` runs.
inline std::vector<SweepRow> subset_sweep(std::span<const LabeledPair> pairs,
                                          const PipelineConfig& config,
                                          std::span<const int> subset_counts, int repeats = 3) {
  if (pairs.empty()) throw InputError("benchmark needs at least one pair");
  std::vector<MatchedPair> matched;
  std::vector<std::vector<Vec3>> pts0, pts1;
  double upstream_ms = 0.0;
  for (const auto& p : pairs) {
    matched.push_back(match_frames(p.frame0, p.frame1, config));
    upstream_ms += matched.back().time_ms["descriptor"] + matched.back().time_ms["correspondence"];
    pts0.push_back(valid_points(matched.back().cloud0));
    pts1.push_back(valid_points(matched.back().cloud1));
  }
  upstream_ms /= static_cast<double>(pairs.size());

  std::vector<SweepRow> rows;
  for (int t : subset_counts) {
    PipelineConfig c = config;
    c.fit.num_subsets = t;
    c.fit.use_randomization = true;
    std::vector<RegistrationReport> reports;
    double fit_ms = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      FitResult fit;
      double best_ms = std::numeric_limits<double>::infinity();
      for (int rep = 0; rep < std::max(1, repeats); ++rep) {
        const auto start = Clock::now();
        fit = fit_matches(matched[i].correspondences, c);
        best_ms = std::min(best_ms, elapsed_ms(start));
      }
      fit_ms += best_ms;
      reports.push_back(evaluate_estimate(fit.transform, pairs[i].truth, pts0[i], pts1[i], c.seed));
      reports.back().time_ms["alignment"] = best_ms;
    }
    SweepRow row;
    row.subsets = t;
    row.summary = aggregate(reports);
    row.mean_fit_ms = fit_ms / static_cast<double>(pairs.size());
    row.mean_total_ms = upstream_ms + row.mean_fit_ms;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rgbdreg
