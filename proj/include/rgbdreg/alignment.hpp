#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "rgbdreg/correspondence.hpp"
#include "rgbdreg/error.hpp"
#include "rgbdreg/random.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg {

/// Second-to-first singular value ratio below which a support is collinear.
inline constexpr double kDegeneracyRatio = 1e-9;

enum class ErrorNormalization {
  kCount,      ///< divide by |M|
  kWeightSum,  ///< divide by the sum of weights
};

struct FitConfig {
  int num_subsets = 100;
  int subset_size = 20;
  std::uint64_t seed = 0;
  bool use_randomization = true;
  ErrorNormalization normalization = ErrorNormalization::kCount;

  /// 10 subsets of 80, the setting used while training.
  static FitConfig training() { return {10, 80, 0, true, ErrorNormalization::kCount}; }
  /// 100 subsets of 20.
  static FitConfig inference() { return {}; }
};

struct FitResult {
  RigidTransform transform;
  double full_set_weighted_error = 0.0;
  /// Full-set error of each subset's candidate; NaN where the subset was degenerate.
  std::vector<double> per_subset_errors;
  std::vector<bool> degenerate_flags;
  int chosen_subset = -1;  ///< -1 for the non-randomized fit
};

using Correspondences = std::span<const Correspondence>;

/// |M|^-1 * sum w * ||p - T(q)||^2 (or divided by the weight sum).
inline double weighted_error(Correspondences m, const RigidTransform& t,
                             ErrorNormalization norm = ErrorNormalization::kCount) {
  if (m.empty()) throw InputError("weighted error of an empty correspondence set");
  double sum = 0.0;
  double weight_sum = 0.0;
  for (const auto& c : m) {
    sum += c.weight * (c.p - t(c.q)).squaredNorm();
    weight_sum += c.weight;
  }
  if (norm == ErrorNormalization::kWeightSum) {
    if (!(weight_sum > 0.0)) throw NumericalError("weighted error with zero total weight");
    return sum / weight_sum;
  }
  return sum / static_cast<double>(m.size());
}

namespace detail {

/// Everything the closed-form solve produces; the gradient reuses it.
struct KabschSolution {
  RigidTransform transform;
  Vec3 centroid_p;
  Vec3 centroid_q;
  double weight_sum = 0.0;
  Mat3 u;
  Mat3 v;
  Vec3 singular_values;
  double reflection_sign = 1.0;
};

inline KabschSolution solve_kabsch(Correspondences m) {
  double weight_sum = 0.0;
  int support = 0;
  for (const auto& c : m) {
    if (c.weight < 0.0 || !std::isfinite(c.weight)) {
      throw InputError("correspondence weights must be finite and non-negative");
    }
    weight_sum += c.weight;
    support += c.weight > 0.0;
  }
  if (!(weight_sum > 0.0)) throw DegenerateFitError("sum of weights is not positive");
  if (support < 3) {
    throw DegenerateFitError("fewer than 3 correspondences carry weight");
  }

  Vec3 mp = Vec3::Zero();
  Vec3 mq = Vec3::Zero();
  for (const auto& c : m) {
    mp += c.weight * c.p;
    mq += c.weight * c.q;
  }
  mp /= weight_sum;
  mq /= weight_sum;

  Mat3 cov = Mat3::Zero();
  for (const auto& c : m) cov += c.weight * (c.p - mp) * (c.q - mq).transpose();

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[0] > 0.0) || !(s[1] >= kDegeneracyRatio * s[0])) {
    std::ostringstream os;
    os << "collinear support (singular values " << s.transpose() << ")";
    throw DegenerateFitError(os.str());
  }
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  const double sign = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = u * Eigen::DiagonalMatrix<double, 3>(1.0, 1.0, sign) * v.transpose();
  // The product of orthogonal SVD factors is a rotation up to rounding; the
  // constructor re-checks it.
  RigidTransform t(r, mp - r * mq);
  return {t, mp, mq, weight_sum, u, v, s, sign};
}

}  // namespace detail

/// Closed-form minimizer of the weighted error, mapping each q onto its p.
inline RigidTransform weighted_kabsch(Correspondences m) {
  return detail::solve_kabsch(m).transform;
}

/// Fits one candidate per random subset and keeps the candidate with the lowest
/// weighted error on the full set. Equal errors go to the lower subset index.
inline FitResult randomized_fit(Correspondences m, const FitConfig& config) {
  if (config.num_subsets < 1) throw ConfigError("number of subsets must be positive");
  if (config.subset_size < 3) throw ConfigError("subset size must be at least 3");

  FitResult result;
  if (!config.use_randomization) {
    result.transform = weighted_kabsch(m);
    result.full_set_weighted_error = weighted_error(m, result.transform, config.normalization);
    result.per_subset_errors = {result.full_set_weighted_error};
    result.degenerate_flags = {false};
    return result;
  }

  const std::size_t n = m.size();
  const auto size = static_cast<std::size_t>(config.subset_size);
  if (size > n) {
    std::ostringstream os;
    os << "subset size " << size << " exceeds the " << n << " available correspondences";
    throw ConfigError(os.str());
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> perm(n);
  std::vector<std::size_t> chosen(size);
  std::vector<Correspondence> subset(size);
  double best_error = std::numeric_limits<double>::infinity();
  RigidTransform best;
  int best_index = -1;

  result.per_subset_errors.assign(static_cast<std::size_t>(config.num_subsets),
                                  std::numeric_limits<double>::quiet_NaN());
  result.degenerate_flags.assign(static_cast<std::size_t>(config.num_subsets), false);

  for (int s = 0; s < config.num_subsets; ++s) {
    // Partial Fisher-Yates: the first `size` slots become a uniform subset.
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t j = i + uniform_below(rng, n - i);
      std::swap(perm[i], perm[j]);
    }
    std::copy_n(perm.begin(), size, chosen.begin());
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i = 0; i < size; ++i) subset[i] = m[chosen[i]];

    RigidTransform candidate;
    try {
      candidate = weighted_kabsch(subset);
    } catch (const DegenerateFitError&) {
      result.degenerate_flags[static_cast<std::size_t>(s)] = true;
      continue;
    }
    const double err = weighted_error(m, candidate, config.normalization);
    result.per_subset_errors[static_cast<std::size_t>(s)] = err;
    if (err < best_error) {
      best_error = err;
      best = candidate;
      best_index = s;
    }
  }
  if (best_index < 0) {
    throw DegenerateFitError("all " + std::to_string(config.num_subsets) +
                             " subsets were degenerate");
  }
  result.transform = best;
  result.full_set_weighted_error = best_error;
  result.chosen_subset = best_index;
  return result;
}

/// d E(M, T*(w)) / d w_i, where T*(w) is the weighted Kabsch solution and E
/// uses the |M| normalization. Includes both the explicit term and the term
/// through T*, obtained by differentiating the centroids and the SVD rotation.
inline std::vector<double> error_weight_gradient(Correspondences m) {
  const auto sol = detail::solve_kabsch(m);
  const Mat3& r = sol.transform.rotation();
  const Vec3& t = sol.transform.translation();
  const double n = static_cast<double>(m.size());

  // lambda = signed singular values; rotation derivative needs lambda_a + lambda_b != 0.
  const Vec3 lambda(sol.singular_values[0], sol.singular_values[1],
                    sol.reflection_sign * sol.singular_values[2]);
  const double scale = sol.singular_values[0];
  Mat3 inv_pair_sum = Mat3::Zero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (a == b) continue;
      const double denom = lambda[a] + lambda[b];
      if (std::abs(denom) <= 1e-12 * scale) {
        throw DegenerateFitError("optimal rotation is not unique; gradient undefined");
      }
      inv_pair_sum(a, b) = 1.0 / denom;
    }
  }

  // Sensitivities of E to R and t at the optimum.
  Mat3 g = Mat3::Zero();
  Vec3 residual_sum = Vec3::Zero();
  for (const auto& c : m) {
    const Vec3 res = c.p - r * c.q - t;
    g += c.weight * res * c.q.transpose();
    residual_sum += c.weight * res;
  }

  const Mat3& v = sol.v;
  std::vector<double> grad(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& c = m[i];
    const Vec3 a = c.p - sol.centroid_p;
    const Vec3 b = c.q - sol.centroid_q;
    const Vec3 dmu_p = a / sol.weight_sum;
    const Vec3 dmu_q = b / sol.weight_sum;
    const Mat3 dh = a * b.transpose();

    // Skew part of R^T dH solved in the right singular basis.
    const Mat3 rt_dh = r.transpose() * dh;
    const Mat3 skew = v.transpose() * (rt_dh - rt_dh.transpose()) * v;
    const Mat3 omega_v = skew.cwiseProduct(inv_pair_sum);
    const Mat3 dr = r * v * omega_v * v.transpose();
    const Vec3 dt = dmu_p - dr * sol.centroid_q - r * dmu_q;

    const double direct = (c.p - r * c.q - t).squaredNorm() / n;
    const double implicit = -2.0 / n * (dr.cwiseProduct(g).sum() + residual_sum.dot(dt));
    grad[i] = direct + implicit;
  }
  return grad;
}

}  // namespace rgbdreg
