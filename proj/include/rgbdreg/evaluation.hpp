#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rgbdreg/error.hpp"
#include "rgbdreg/random.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg {

inline constexpr std::array<double, 3> kRotationThresholdsDeg{5.0, 10.0, 45.0};
inline constexpr std::array<double, 3> kTranslationThresholdsCm{5.0, 10.0, 25.0};
inline constexpr std::array<double, 3> kChamferThresholdsCm{1.0, 5.0, 10.0};

/// How far outside [-1, 1] the arccos argument may drift before it signals a
/// non-rotation input.
inline constexpr double kArccosSlack = 1e-9;

/// Angle of R_pred * R_gt^T in degrees. `suspicious`, when given, is set if the
/// arccos argument had to be clamped by more than the slack.
inline double rotation_error(const Mat3& r_pred, const Mat3& r_gt, bool* suspicious = nullptr) {
  const double arg = ((r_pred * r_gt.transpose()).trace() - 1.0) / 2.0;
  if (suspicious) *suspicious = arg > 1.0 + kArccosSlack || arg < -1.0 - kArccosSlack;
  return std::acos(std::clamp(arg, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

/// Euclidean distance between translations, meters in, centimeters out.
inline double translation_error(const Vec3& t_pred, const Vec3& t_gt) {
  return (t_pred - t_gt).norm() * 100.0;
}

namespace detail {

inline double mean_nearest_distance(std::span<const Vec3> from, std::span<const Vec3> to) {
  double sum = 0.0;
  for (const Vec3& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& b : to) best = std::min(best, (a - b).squaredNorm());
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace detail

/// Symmetric chamfer distance (sum of both mean nearest-neighbor distances)
/// between two clouds in meters, returned in centimeters. Exhaustive search.
inline double chamfer_error(std::span<const Vec3> reference, std::span<const Vec3> reconstruction) {
  if (reference.empty() || reconstruction.empty()) {
    throw InputError("chamfer distance needs two non-empty clouds");
  }
  return (detail::mean_nearest_distance(reference, reconstruction) +
          detail::mean_nearest_distance(reconstruction, reference)) *
         100.0;
}

inline constexpr std::size_t kChamferMaxPoints = 20000;

/// Chamfer error of a predicted alignment: frame-1 points under the predicted
/// and the true transform, each unioned with the frame-2 points. Clouds above
/// `max_points` are subsampled with the same seeded uniform index draw.
inline double alignment_chamfer(std::span<const Vec3> cloud1, std::span<const Vec3> cloud2,
                                const RigidTransform& predicted, const RigidTransform& truth,
                                std::uint64_t seed, std::size_t max_points = kChamferMaxPoints) {
  std::vector<Vec3> reference;
  std::vector<Vec3> reconstruction;
  reference.reserve(cloud1.size() + cloud2.size());
  reconstruction.reserve(cloud1.size() + cloud2.size());
  for (const Vec3& x : cloud1) {
    reference.push_back(truth(x));
    reconstruction.push_back(predicted(x));
  }
  reference.insert(reference.end(), cloud2.begin(), cloud2.end());
  reconstruction.insert(reconstruction.end(), cloud2.begin(), cloud2.end());

  if (reference.size() > max_points) {
    std::vector<std::size_t> idx(reference.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < max_points; ++i) {
      std::swap(idx[i], idx[i + uniform_below(rng, idx.size() - i)]);
    }
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
    std::vector<Vec3> a;
    std::vector<Vec3> b;
    for (std::size_t i : idx) {
      a.push_back(reference[i]);
      b.push_back(reconstruction[i]);
    }
    reference = std::move(a);
    reconstruction = std::move(b);
  }
  return chamfer_error(reference, reconstruction);
}

struct RegistrationReport {
  double rotation_error_deg = 0.0;
  double translation_error_cm = 0.0;
  double chamfer_cm = 0.0;
  std::array<bool, 3> rotation_within{};
  std::array<bool, 3> translation_within{};
  std::array<bool, 3> chamfer_within{};
  std::map<std::string, double> time_ms;
};

inline RegistrationReport make_report(double rot_deg, double trans_cm, double chamfer_cm) {
  RegistrationReport r;
  r.rotation_error_deg = rot_deg;
  r.translation_error_cm = trans_cm;
  r.chamfer_cm = chamfer_cm;
  for (std::size_t i = 0; i < 3; ++i) {
    r.rotation_within[i] = rot_deg < kRotationThresholdsDeg[i];
    r.translation_within[i] = trans_cm < kTranslationThresholdsCm[i];
    r.chamfer_within[i] = chamfer_cm < kChamferThresholdsCm[i];
  }
  return r;
}

struct MetricSummary {
  double mean = 0.0;
  double median = 0.0;
  std::array<double, 3> thresholds{};
  std::array<double, 3> accuracy{};  ///< fraction of pairs strictly below each threshold
};

struct AggregateSummary {
  std::size_t count = 0;
  MetricSummary rotation;
  MetricSummary translation;
  MetricSummary chamfer;
  std::map<std::string, double> mean_time_ms;
};

inline MetricSummary summarize(std::vector<double> values, const std::array<double, 3>& thresholds) {
  MetricSummary s;
  s.thresholds = thresholds;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto below = std::count_if(values.begin(), values.end(),
                                     [&](double x) { return x < thresholds[i]; });
    s.accuracy[i] = static_cast<double>(below) / n;
  }
  return s;
}

inline AggregateSummary aggregate(std::span<const RegistrationReport> reports) {
  if (reports.empty()) throw InputError("aggregate needs at least one report");
  std::vector<double> rot;
  std::vector<double> trans;
  std::vector<double> cham;
  AggregateSummary out;
  out.count = reports.size();
  for (const auto& r : reports) {
    rot.push_back(r.rotation_error_deg);
    trans.push_back(r.translation_error_cm);
    cham.push_back(r.chamfer_cm);
    for (const auto& [stage, ms] : r.time_ms) out.mean_time_ms[stage] += ms;
  }
  for (auto& [stage, ms] : out.mean_time_ms) ms /= static_cast<double>(reports.size());
  out.rotation = summarize(std::move(rot), kRotationThresholdsDeg);
  out.translation = summarize(std::move(trans), kTranslationThresholdsCm);
  out.chamfer = summarize(std::move(cham), kChamferThresholdsCm);
  return out;
}

}  // namespace rgbdreg
