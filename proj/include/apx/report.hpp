#pragma once

// JSON shapes for serve and replay reports. Field order is fixed so a rerun
// with the same seed is byte-identical once timing fields are dropped;
// every timing quantity lives under a key listed in kTimingKeys.

#include <string>
#include <vector>

#include <json.hpp>

#include "apx/engine.hpp"

namespace apx {

inline constexpr const char* kTimingKeys[] = {"wall_ms", "mean_latency_ms",
                                              "p95_latency_ms", "speedup_wall",
                                              "exact_wall_ms"};

inline nlohmann::ordered_json prediction_to_json(const PredictionValue& p) {
  nlohmann::ordered_json j;
  if (p.task == Task::Regression) {
    j["value"] = p.value;
  } else {
    j["class"] = p.class_index;
    j["scores"] = p.scores;
  }
  return j;
}

inline nlohmann::ordered_json serve_report_to_json(const ServeReport& r,
                                                   bool with_features = true) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["prediction"] = prediction_to_json(r.prediction);
  j["achieved"] = r.achieved;
  j["iterations"] = r.iterations;
  j["mode"] = terminal_mode_name(r.mode);
  j["rows_scanned"] = r.rows_scanned;
  j["rows_exact"] = r.rows_exact;
  if (with_features) {
    nlohmann::ordered_json feats = nlohmann::ordered_json::array();
    for (const FeatureReport& f : r.features) {
      nlohmann::ordered_json fj;
      fj["id"] = f.id;
      fj["n"] = f.n;
      fj["N"] = f.N;
      fj["value"] = f.value;
      fj["sigma"] = f.sigma;
      fj["exact"] = f.exact;
      feats.push_back(std::move(fj));
    }
    j["features"] = std::move(feats);
  }
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  j["wall_ms"] = r.wall_ms;
  return j;
}

// Removes timing keys recursively; used by determinism checks and tests.
inline void strip_timing_fields(nlohmann::ordered_json& j) {
  if (j.is_object()) {
    for (const char* key : kTimingKeys) {
      j.erase(key);
    }
    for (auto& [k, v] : j.items()) strip_timing_fields(v);
  } else if (j.is_array()) {
    for (auto& v : j) strip_timing_fields(v);
  }
}

}  // namespace apx
