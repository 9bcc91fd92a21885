#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "rgbdreg/alignment.hpp"
#include "rgbdreg/camera.hpp"
#include "rgbdreg/correspondence.hpp"
#include "rgbdreg/descriptor.hpp"
#include "rgbdreg/random.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace testing_support {

using namespace rgbdreg;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double normal(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return n(rng);
}

inline Vec3 random_vector(std::mt19937_64& rng, double scale = 1.0) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  Vec3 v;
  do {
    v = {normal(rng), normal(rng), normal(rng)};
  } while (v.norm() < 1e-3);
  return v.normalized();
}

/// Uniformly random rotation axis, angle up to `max_angle`.
inline RigidTransform random_transform(std::mt19937_64& rng, double max_angle = std::numbers::pi,
                                       double max_translation = 1.0) {
  return RigidTransform::from_axis_angle(random_unit(rng), uniform(rng, 0.0, max_angle),
                                         random_vector(rng, max_translation));
}

inline std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::vector<Vec3> out(n);
  for (auto& x : out) x = random_vector(rng, scale);
  return out;
}

/// Correspondences with p = T(q) + noise.
inline std::vector<Correspondence> planted_matches(std::mt19937_64& rng, std::size_t n,
                                                   const RigidTransform& t, double noise = 0.0,
                                                   double min_weight = 1.0) {
  std::vector<Correspondence> m(n);
  for (auto& c : m) {
    c.q = random_vector(rng, 1.0);
    c.p = t(c.q) + noise * Vec3(normal(rng), normal(rng), normal(rng));
    c.weight = min_weight >= 1.0 ? 1.0 : uniform(rng, min_weight, 1.0);
  }
  return m;
}

inline Mat3 euler_zyx(double yaw, double pitch, double roll) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

/// Feature cloud with random unit features; positions are arbitrary but unique.
inline FeaturePointCloud random_feature_cloud(std::mt19937_64& rng, std::size_t n, int dim,
                                              double invalid_fraction = 0.0) {
  FeaturePointCloud c;
  c.positions.resize(n);
  c.colors.assign(n, Vec3::Constant(0.5));
  c.valid.resize(n);
  c.pixel_index.resize(n);
  c.features.resize(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i) {
    c.positions[i] = random_vector(rng, 2.0);
    c.valid[i] = uniform01(rng) >= invalid_fraction;
    c.pixel_index[i] = {static_cast<int>(i), 0};
    Eigen::VectorXd f(dim);
    for (int k = 0; k < dim; ++k) f[k] = normal(rng);
    f.normalize();
    for (int k = 0; k < dim; ++k) c.features(static_cast<Eigen::Index>(i), k) = static_cast<float>(f[k]);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Reference implementations.

inline double ref_cosine_distance(const FeaturePointCloud& a, std::size_t i,
                                  const FeaturePointCloud& b, std::size_t j) {
  double dot = 0.0;
  for (int f = 0; f < a.feature_dim(); ++f) {
    dot += static_cast<double>(a.features(static_cast<Eigen::Index>(i), f)) *
           static_cast<double>(b.features(static_cast<Eigen::Index>(j), f));
  }
  return std::max(0.0, 1.0 - dot);
}

/// Double loop over all valid pairs, keeping the two smallest distances with
/// ties to the lower index.
inline std::vector<NeighborPair> ref_two_nearest(const FeaturePointCloud& queries,
                                                 const FeaturePointCloud& targets) {
  std::vector<NeighborPair> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!queries.valid[i]) continue;
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < targets.size(); ++j)
      if (targets.valid[j]) d.emplace_back(ref_cosine_distance(queries, i, targets, j), j);
    std::stable_sort(d.begin(), d.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    out.push_back({d[0].second, d[0].first, d[1].second, d[1].first});
  }
  return out;
}

struct RefMatch {
  std::size_t p;
  std::size_t q;
  double weight;
  MatchDirection direction;
};

/// Full weight table per direction, sorted by weight then query index, truncated to k/2.
inline std::vector<RefMatch> ref_correspondences(const FeaturePointCloud& p,
                                                 const FeaturePointCloud& q, int k,
                                                 bool ratio = true) {
  auto weight = [ratio](const NeighborPair& n) {
    if (!ratio) return std::clamp(1.0 - n.d1, 0.0, 1.0);
    if (n.d2 < 1e-12) return 0.0;
    return std::clamp(1.0 - n.d1 / n.d2, 0.0, 1.0);
  };
  auto side = [&](const FeaturePointCloud& a, const FeaturePointCloud& b, MatchDirection dir) {
    const auto table = ref_two_nearest(a, b);
    std::vector<RefMatch> rows;
    std::size_t t = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a.valid[i]) continue;
      const auto& n = table[t++];
      if (dir == MatchDirection::kPtoQ) rows.push_back({i, n.nearest, weight(n), dir});
      else rows.push_back({n.nearest, i, weight(n), dir});
    }
    std::sort(rows.begin(), rows.end(), [dir](const RefMatch& x, const RefMatch& y) {
      if (x.weight != y.weight) return x.weight > y.weight;
      return dir == MatchDirection::kPtoQ ? x.p < y.p : x.q < y.q;
    });
    if (rows.size() > static_cast<std::size_t>(k / 2)) rows.resize(static_cast<std::size_t>(k / 2));
    return rows;
  };
  auto out = side(p, q, MatchDirection::kPtoQ);
  const auto back = side(q, p, MatchDirection::kQtoP);
  out.insert(out.end(), back.begin(), back.end());
  return out;
}

inline double ref_weighted_error(const std::vector<Correspondence>& m, const RigidTransform& t) {
  const Mat3& r = t.rotation();
  const Vec3& tr = t.translation();
  double sum = 0.0;
  for (const auto& c : m) {
    double sq = 0.0;
    for (int i = 0; i < 3; ++i) {
      double y = tr[i];
      for (int j = 0; j < 3; ++j) y += r(i, j) * c.q[j];
      sq += (c.p[i] - y) * (c.p[i] - y);
    }
    sum += c.weight * sq;
  }
  return sum / static_cast<double>(m.size());
}

/// Error of the best translation for a fixed rotation.
inline double error_at_rotation(const std::vector<Correspondence>& m, const Mat3& r) {
  double ws = 0.0;
  Vec3 mp = Vec3::Zero(), mq = Vec3::Zero();
  for (const auto& c : m) {
    ws += c.weight;
    mp += c.weight * c.p;
    mq += c.weight * c.q;
  }
  mp /= ws;
  mq /= ws;
  double sum = 0.0;
  for (const auto& c : m) sum += c.weight * (c.p - r * c.q - (mp - r * mq)).squaredNorm();
  return sum / static_cast<double>(m.size());
}

/// Smallest error over a 10 degree Euler grid covering SO(3).
inline double grid_minimum_error(const std::vector<Correspondence>& m, double step_deg = 10.0) {
  const double step = step_deg * std::numbers::pi / 180.0;
  double best = std::numeric_limits<double>::infinity();
  const int n_full = static_cast<int>(std::lround(360.0 / step_deg));
  const int n_half = static_cast<int>(std::lround(180.0 / step_deg));
  for (int a = 0; a < n_full; ++a)
    for (int b = 0; b <= n_half; ++b)
      for (int c = 0; c < n_full; ++c)
        best = std::min(best, error_at_rotation(m, euler_zyx(-std::numbers::pi + a * step,
                                                              -std::numbers::pi / 2 + b * step,
                                                              -std::numbers::pi + c * step)));
  return best;
}

inline double optimal_error(const std::vector<Correspondence>& m) {
  return ref_weighted_error(m, weighted_kabsch(m));
}

/// Central differences of E(M, T*(w)) in each weight.
inline std::vector<double> finite_difference_gradient(const std::vector<Correspondence>& m,
                                                      double h = 1e-5) {
  std::vector<double> g(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto plus = m;
    auto minus = m;
    plus[i].weight += h;
    minus[i].weight -= h;
    g[i] = (optimal_error(plus) - optimal_error(minus)) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max_i |b_i|.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

inline double ref_chamfer_cm(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto one_way = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    double sum = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) {
        const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      sum += best;
    }
    return sum / static_cast<double>(x.size());
  };
  return 100.0 * (one_way(a, b) + one_way(b, a));
}

inline double rotation_gap(const Mat3& a, const Mat3& b) {
  return Eigen::AngleAxisd(a * b.transpose()).angle();
}

}  // namespace testing_support
