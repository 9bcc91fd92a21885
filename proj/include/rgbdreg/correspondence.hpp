#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rgbdreg/descriptor.hpp"
#include "rgbdreg/error.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg {

/// Below this second-neighbor distance a match carries no ratio information.
inline constexpr double kRatioEpsilon = 1e-12;

inline constexpr int kDefaultTopK = 400;

enum class MatchDirection { kPtoQ, kQtoP };

enum class WeightMode {
  kRatio,     ///< w = 1 - D1 / D2
  kDistance,  ///< w = 1 - D1, clamped to [0, 1]; ranks by feature distance alone
};

struct NeighborPair {
  std::size_t nearest = 0;
  double d1 = 0.0;
  std::size_t second = 0;
  double d2 = 0.0;
};

/// One (p, q, w) triple; `p` lives in the first cloud, `q` in the second,
/// regardless of which side issued the query.
struct Correspondence {
  Vec3 p = Vec3::Zero();
  Vec3 q = Vec3::Zero();
  double weight = 0.0;
  MatchDirection direction = MatchDirection::kPtoQ;
  std::size_t p_index = 0;
  std::size_t q_index = 0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> entries;
  /// How many entries each direction was short of k/2.
  std::size_t shortfall_pq = 0;
  std::size_t shortfall_qp = 0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

inline double ratio_weight(double d1, double d2) {
  if (d2 < kRatioEpsilon) return 0.0;
  return std::clamp(1.0 - d1 / d2, 0.0, 1.0);
}

inline double distance_weight(double d1) { return std::clamp(1.0 - d1, 0.0, 1.0); }

namespace detail {

inline std::vector<std::size_t> valid_indices(const FeaturePointCloud& cloud) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) idx.push_back(i);
  return idx;
}

struct TopTwo {
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
  std::size_t i1 = 0;
  std::size_t i2 = 0;

  // Candidates must arrive in increasing index order: equal distances keep
  // the earlier (lower) index in front.
  void offer(double d, std::size_t i) {
    if (d < d1) {
      d2 = d1;
      i2 = i1;
      d1 = d;
      i1 = i;
    } else if (d < d2) {
      d2 = d;
      i2 = i;
    }
  }
};

/// Exhaustive two-nearest search between the valid points of `a` and `b` under
/// cosine distance max(0, 1 - <f_a, f_b>). Dot products accumulate in double,
/// feature by feature, so each distance is the same regardless of how the loop
/// over targets is vectorized. Fills the a->b table always and the b->a table
/// when `reverse` is non-null. Indices are into the full clouds.
inline void two_nearest_tables(const FeaturePointCloud& a, const FeaturePointCloud& b,
                               std::vector<NeighborPair>& forward,
                               std::vector<NeighborPair>* reverse) {
  if (a.feature_dim() != b.feature_dim()) {
    throw DimensionMismatchError("feature dimensions differ between clouds");
  }
  const auto ia = valid_indices(a);
  const auto ib = valid_indices(b);
  const int dim = a.feature_dim();
  const std::size_t nb = ib.size();

  // Target features transposed (dim x nb) so the inner loop runs over targets.
  std::vector<double> bt(static_cast<std::size_t>(dim) * nb);
  for (std::size_t j = 0; j < nb; ++j)
    for (int f = 0; f < dim; ++f)
      bt[static_cast<std::size_t>(f) * nb + j] = b.features(static_cast<Eigen::Index>(ib[j]), f);

  std::vector<double> acc(nb);
  std::vector<TopTwo> cols(reverse ? nb : 0);
  forward.assign(ia.size(), {});

  for (std::size_t r = 0; r < ia.size(); ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int f = 0; f < dim; ++f) {
      const double af = a.features(static_cast<Eigen::Index>(ia[r]), f);
      const double* row = bt.data() + static_cast<std::size_t>(f) * nb;
      for (std::size_t j = 0; j < nb; ++j) acc[j] += af * row[j];
    }
    TopTwo best;
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = std::max(0.0, 1.0 - acc[j]);
      best.offer(d, ib[j]);
      if (reverse) cols[j].offer(d, ia[r]);
    }
    forward[r] = {best.i1, best.d1, best.i2, best.d2};
  }
  if (reverse) {
    reverse->assign(nb, {});
    for (std::size_t j = 0; j < nb; ++j)
      (*reverse)[j] = {cols[j].i1, cols[j].d1, cols[j].i2, cols[j].d2};
  }
}

}  // namespace detail

/// Nearest and second-nearest valid target of every valid query point, in the
/// order of the valid queries. Ties go to the lower target index.
inline std::vector<NeighborPair> two_nearest(const FeaturePointCloud& queries,
                                             const FeaturePointCloud& targets) {
  if (targets.valid_count() < 2) {
    throw InsufficientPointsError("two-nearest search needs at least 2 valid targets");
  }
  std::vector<NeighborPair> out;
  detail::two_nearest_tables(queries, targets, out, nullptr);
  return out;
}

/// Matches both ways, weights every match, and keeps the k/2 best per direction.
/// Within a direction, candidates rank by weight (descending) then query index.
inline CorrespondenceSet extract_correspondences(const FeaturePointCloud& p_cloud,
                                                 const FeaturePointCloud& q_cloud, int k,
                                                 WeightMode mode = WeightMode::kRatio) {
  if (k <= 0 || k % 2 != 0) {
    throw ConfigError("top-k must be a positive even number, got " + std::to_string(k));
  }
  if (p_cloud.valid_count() < 2 || q_cloud.valid_count() < 2) {
    std::ostringstream os;
    os << "both clouds need at least 2 valid points (have " << p_cloud.valid_count() << " and "
       << q_cloud.valid_count() << ")";
    throw InsufficientPointsError(os.str());
  }

  std::vector<NeighborPair> pq;
  std::vector<NeighborPair> qp;
  detail::two_nearest_tables(p_cloud, q_cloud, pq, &qp);
  const auto p_valid = detail::valid_indices(p_cloud);
  const auto q_valid = detail::valid_indices(q_cloud);

  auto weigh = [mode](const NeighborPair& n) {
    return mode == WeightMode::kRatio ? ratio_weight(n.d1, n.d2) : distance_weight(n.d1);
  };

  struct Candidate {
    double weight;
    std::size_t query;
    std::size_t match;
  };
  auto select = [&](const std::vector<NeighborPair>& table,
                    const std::vector<std::size_t>& query_ids, std::size_t want,
                    std::size_t& shortfall) {
    std::vector<Candidate> c;
    c.reserve(table.size());
    for (std::size_t i = 0; i < table.size(); ++i)
      c.push_back({weigh(table[i]), query_ids[i], table[i].nearest});
    const std::size_t take = std::min(want, c.size());
    shortfall = want - take;
    std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(take), c.end(),
                      [](const Candidate& x, const Candidate& y) {
                        if (x.weight != y.weight) return x.weight > y.weight;
                        return x.query < y.query;
                      });
    c.resize(take);
    return c;
  };

  const std::size_t half = static_cast<std::size_t>(k / 2);
  CorrespondenceSet out;
  const auto best_pq = select(pq, p_valid, half, out.shortfall_pq);
  const auto best_qp = select(qp, q_valid, half, out.shortfall_qp);
  if (best_pq.empty() && best_qp.empty()) {
    throw NoCorrespondenceError("no candidate matches in either direction");
  }
  out.entries.reserve(best_pq.size() + best_qp.size());
  for (const auto& c : best_pq) {
    out.entries.push_back({p_cloud.positions[c.query], q_cloud.positions[c.match], c.weight,
                           MatchDirection::kPtoQ, c.query, c.match});
  }
  for (const auto& c : best_qp) {
    out.entries.push_back({p_cloud.positions[c.match], q_cloud.positions[c.query], c.weight,
                           MatchDirection::kQtoP, c.match, c.query});
  }
  return out;
}

/// Text dump, one entry per line: `px py pz qx qy qz w dir`.
inline void write_correspondences(std::ostream& os, const CorrespondenceSet& m) {
  const auto old_precision = os.precision(17);
  for (const auto& c : m.entries) {
    os << c.p.x() << ' ' << c.p.y() << ' ' << c.p.z() << ' ' << c.q.x() << ' ' << c.q.y() << ' '
       << c.q.z() << ' ' << c.weight << ' '
       << (c.direction == MatchDirection::kPtoQ ? "PQ" : "QP") << '\n';
  }
  os.precision(old_precision);
}

}  // namespace rgbdreg
