#pragma once

// Replay driver: runs a request log through both the exact baseline and the
// adaptive engine, then aggregates accuracy, cost, and latency. Requests are
// independent, so the replay may fan out across worker threads; per-request
// seeds derive from request ids, making the report identical either way.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "apx/engine.hpp"
#include "apx/report.hpp"

namespace apx {

struct ReplayRecord {
  ServeReport approx;
  ServeReport exact;
  bool covered = false;    // |exact - served| <= delta, or class match
  double abs_error = 0.0;  // regression only
};

struct ReplayAggregates {
  std::size_t requests = 0;
  double coverage = 0.0;
  double mean_iterations = 0.0;
  double mean_rows_fraction = 0.0;  // mean over requests of scanned / exact rows
  double total_rows_fraction = 0.0; // total scanned / total exact rows
  double speedup_rows = 0.0;        // total exact rows / total scanned rows
  double speedup_wall = 0.0;        // total exact wall / total approx wall
  double mean_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  double mean_achieved = 0.0;
  std::map<std::uint32_t, std::size_t> iteration_histogram;
};

struct ReplayReport {
  std::vector<ReplayRecord> records;
  ReplayAggregates aggregates;
  RequestConfig config;
  double delta_used = 0.0;
};

// Aggregates recomputed from the per-request records; kept separate so the
// reported numbers can be cross-checked against the records they came from.
inline ReplayAggregates aggregate_replay(const std::vector<ReplayRecord>& records) {
  ReplayAggregates agg;
  agg.requests = records.size();
  if (records.empty()) return agg;
  double covered = 0.0, iters = 0.0, frac = 0.0, achieved = 0.0;
  double scanned = 0.0, exact_rows = 0.0, wall = 0.0, exact_wall = 0.0;
  std::vector<double> latencies;
  latencies.reserve(records.size());
  for (const ReplayRecord& r : records) {
    covered += r.covered ? 1.0 : 0.0;
    iters += r.approx.iterations;
    achieved += r.approx.achieved;
    const double denom = static_cast<double>(std::max<std::uint64_t>(1, r.exact.rows_scanned));
    frac += static_cast<double>(r.approx.rows_scanned) / denom;
    scanned += static_cast<double>(r.approx.rows_scanned);
    exact_rows += static_cast<double>(r.exact.rows_scanned);
    wall += r.approx.wall_ms;
    exact_wall += r.exact.wall_ms;
    latencies.push_back(r.approx.wall_ms);
    agg.iteration_histogram[r.approx.iterations] += 1;
  }
  const double n = static_cast<double>(records.size());
  agg.coverage = covered / n;
  agg.mean_iterations = iters / n;
  agg.mean_achieved = achieved / n;
  agg.mean_rows_fraction = frac / n;
  agg.total_rows_fraction = exact_rows == 0.0 ? 0.0 : scanned / exact_rows;
  agg.speedup_rows = scanned == 0.0 ? 0.0 : exact_rows / scanned;
  agg.speedup_wall = wall == 0.0 ? 0.0 : exact_wall / wall;
  agg.mean_latency_ms = wall / n;
  std::sort(latencies.begin(), latencies.end());
  agg.p95_latency_ms = quantile_sorted(latencies, 0.95);
  return agg;
}

inline ReplayRecord replay_one(const LoadedPipeline& lp, const RequestRecord& request,
                               const RequestConfig& base_cfg) {
  RequestConfig cfg = base_cfg;
  // Request-scoped seed: replay order and thread assignment do not matter.
  cfg.seed = mix64(base_cfg.seed, static_cast<std::uint64_t>(request.id));
  ReplayRecord rec;
  rec.exact = exact_serve(lp, request);
  rec.approx = serve_request(lp, request, cfg);
  if (lp.spec.task == Task::Regression) {
    rec.abs_error = std::abs(rec.exact.prediction.value - rec.approx.prediction.value);
    rec.covered = rec.abs_error <= cfg.delta;
  } else {
    rec.covered = rec.exact.prediction.class_index == rec.approx.prediction.class_index;
  }
  return rec;
}

inline ReplayReport run_replay(const LoadedPipeline& lp,
                               const std::vector<RequestRecord>& requests,
                               const RequestConfig& cfg, unsigned parallel = 1) {
  validate_requests(lp, requests);
  ReplayReport report;
  report.config = cfg;
  report.delta_used = cfg.delta;
  report.records.resize(requests.size());
  if (parallel <= 1 || requests.size() < 2) {
    for (std::size_t i = 0; i < requests.size(); ++i) {
      report.records[i] = replay_one(lp, requests[i], cfg);
    }
  } else {
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    const unsigned count = std::min<unsigned>(parallel, std::thread::hardware_concurrency());
    for (unsigned w = 0; w < std::max(1u, count); ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= requests.size()) return;
          report.records[i] = replay_one(lp, requests[i], cfg);
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  report.aggregates = aggregate_replay(report.records);
  return report;
}

inline nlohmann::ordered_json replay_report_to_json(const ReplayReport& r,
                                                    const std::string& pipeline_name) {
  nlohmann::ordered_json j;
  j["pipeline"] = pipeline_name;
  nlohmann::ordered_json cfg;
  cfg["alpha"] = r.config.alpha;
  cfg["gamma"] = r.config.gamma;
  cfg["tau"] = r.config.tau;
  cfg["delta"] = r.delta_used;
  cfg["qmc_m"] = r.config.qmc_m;
  cfg["bootstrap_b"] = r.config.bootstrap_b;
  cfg["seed"] = r.config.seed;
  j["config"] = std::move(cfg);

  nlohmann::ordered_json reqs = nlohmann::ordered_json::array();
  for (const ReplayRecord& rec : r.records) {
    nlohmann::ordered_json rj;
    rj["approx"] = serve_report_to_json(rec.approx);
    nlohmann::ordered_json ej;
    ej["prediction"] = prediction_to_json(rec.exact.prediction);
    ej["rows_scanned"] = rec.exact.rows_scanned;
    ej["wall_ms"] = rec.exact.wall_ms;
    rj["exact"] = std::move(ej);
    rj["covered"] = rec.covered;
    if (rec.approx.prediction.task == Task::Regression) rj["abs_error"] = rec.abs_error;
    reqs.push_back(std::move(rj));
  }
  j["requests"] = std::move(reqs);

  const ReplayAggregates& a = r.aggregates;
  nlohmann::ordered_json aj;
  aj["requests"] = a.requests;
  aj["coverage"] = a.coverage;
  aj["mean_achieved"] = a.mean_achieved;
  aj["mean_iterations"] = a.mean_iterations;
  aj["mean_rows_fraction"] = a.mean_rows_fraction;
  aj["total_rows_fraction"] = a.total_rows_fraction;
  aj["speedup_rows"] = a.speedup_rows;
  nlohmann::ordered_json hist;
  for (const auto& [iters, count] : a.iteration_histogram) {
    hist[std::to_string(iters)] = count;
  }
  aj["iteration_histogram"] = std::move(hist);
  aj["speedup_wall"] = a.speedup_wall;
  aj["mean_latency_ms"] = a.mean_latency_ms;
  aj["p95_latency_ms"] = a.p95_latency_ms;
  j["aggregates"] = std::move(aj);
  return j;
}

}  // namespace apx
