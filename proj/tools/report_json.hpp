#pragma once

#include <map>
#include <string>

#include "json.hpp"
#include "rgbdreg/evaluation.hpp"
#include "rgbdreg/pipeline.hpp"

namespace rgbdreg::cli {

using nlohmann::json;

inline std::string threshold_key(const char* metric, double threshold, const char* unit) {
  std::ostringstream os;
  os << metric << '_' << threshold << unit;
  return os.str();
}

inline json pose_json(const RigidTransform& t) {
  json rows = json::array();
  const auto m = t.matrix3x4();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

inline json timing_json(const std::map<std::string, double>& time_ms, bool timing) {
  json out = json::object();
  if (!timing) return out;
  for (const auto& [stage, ms] : time_ms) out[stage] = ms;
  return out;
}

inline json report_json(const RegistrationReport& r, bool timing) {
  json acc = json::object();
  for (std::size_t i = 0; i < 3; ++i) {
    acc[threshold_key("rot", kRotationThresholdsDeg[i], "deg")] = r.rotation_within[i];
    acc[threshold_key("trans", kTranslationThresholdsCm[i], "cm")] = r.translation_within[i];
    acc[threshold_key("chamfer", kChamferThresholdsCm[i], "cm")] = r.chamfer_within[i];
  }
  return {{"rot_err_deg", r.rotation_error_deg},
          {"trans_err_cm", r.translation_error_cm},
          {"chamfer_cm", r.chamfer_cm},
          {"acc", acc},
          {"time_ms", timing_json(r.time_ms, timing)}};
}

inline json losses_json(const LossReport& l) {
  return {{"photometric", l.photometric},
          {"depth", l.depth},
          {"correspondence", l.correspondence},
          {"total", l.total},
          {"valid_pixels", l.valid_pixel_counts},
          {"photometric_zero_coverage", l.photometric_zero_coverage},
          {"depth_zero_coverage", l.depth_zero_coverage}};
}

inline json pair_json(const PairResult& r, bool timing) {
  std::size_t degenerate = 0;
  for (bool b : r.fit.degenerate_flags) degenerate += b;
  return {{"pose", pose_json(r.estimate)},
          {"losses", losses_json(r.losses)},
          {"correspondences",
           {{"count", r.correspondences.size()},
            {"shortfall_pq", r.correspondences.shortfall_pq},
            {"shortfall_qp", r.correspondences.shortfall_qp}}},
          {"fit",
           {{"weighted_error", r.fit.full_set_weighted_error},
            {"chosen_subset", r.fit.chosen_subset},
            {"degenerate_subsets", degenerate}}},
          {"time_ms", timing_json(r.time_ms, timing)}};
}

inline json metric_json(const MetricSummary& m, const char* metric, const char* unit, json& acc) {
  for (std::size_t i = 0; i < 3; ++i) acc[threshold_key(metric, m.thresholds[i], unit)] = m.accuracy[i];
  return {{"mean", m.mean}, {"median", m.median}};
}

inline json summary_json(const AggregateSummary& s, bool timing) {
  json acc = json::object();
  json out = {{"count", s.count}};
  out["rot_err_deg"] = metric_json(s.rotation, "rot", "deg", acc);
  out["trans_err_cm"] = metric_json(s.translation, "trans", "cm", acc);
  out["chamfer_cm"] = metric_json(s.chamfer, "chamfer", "cm", acc);
  out["acc"] = acc;
  out["time_ms"] = timing_json(s.mean_time_ms, timing);
  return out;
}

}  // namespace rgbdreg::cli
