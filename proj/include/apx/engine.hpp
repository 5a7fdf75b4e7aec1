#pragma once

// Request serving loop. Each iteration draws rows per the current plan,
// re-estimates features, propagates uncertainty through the model, and
// either returns a validated prediction or grows the plan along the most
// valuable sampling direction.

#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "apx/aggregate.hpp"
#include "apx/columnar.hpp"
#include "apx/common.hpp"
#include "apx/estimator.hpp"
#include "apx/importance.hpp"
#include "apx/model.hpp"
#include "apx/pipeline.hpp"
#include "apx/planner.hpp"
#include "apx/propagation.hpp"
#include "apx/qmc.hpp"
#include "apx/sampling.hpp"
#include "apx/sobol.hpp"

namespace apx {

struct RequestConfig {
  double alpha = 0.05;
  double gamma = 0.01;
  double tau = 0.95;
  double delta = 0.0;
  std::uint32_t qmc_m = kDefaultQmcM;
  std::uint32_t bootstrap_b = kDefaultBootstrapB;
  std::uint64_t seed = 0;
  bool debug_bootstrap = false;

  void check(Task task) const {
    require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
    require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
    require(delta >= 0.0, "delta must be non-negative");
    require(qmc_m >= kMinQmcM,
            "qmc sample count must be at least " + std::to_string(kMinQmcM));
    require(bootstrap_b >= kMinBootstrapB, "bootstrap replicate count must be at least " +
                                               std::to_string(kMinBootstrapB));
    if (task == Task::Classification) {
      require(delta == 0.0, "classification serving requires delta = 0");
    }
  }
};

// How a request finished: `validated` passed the error-bound check with
// sampling still partial; `exact` means every feature was computed exactly
// (the prediction is the exact pipeline's output).
enum class TerminalMode : std::uint8_t { Validated, Exact };

struct FeatureReport {
  std::string id;
  std::uint64_t n = 0;
  std::uint64_t N = 0;
  double value = 0.0;
  double sigma = 0.0;
  bool exact = false;
};

struct IterationTrace {
  double achieved = 0.0;
  std::uint64_t rows = 0;  // cumulative rows drawn after this iteration's draw
  double output_sigma = 0.0;
  double predicted_variance_drop = 0.0;
  std::vector<std::string> stepped;  // features advanced after this iteration
};

struct ServeReport {
  std::int64_t id = 0;
  PredictionValue prediction;
  double achieved = 0.0;
  std::uint32_t iterations = 0;
  TerminalMode mode = TerminalMode::Validated;
  std::uint64_t rows_scanned = 0;
  std::uint64_t rows_exact = 0;  // full-scan row cost of the same request
  double wall_ms = 0.0;
  std::vector<FeatureReport> features;
  std::vector<IterationTrace> trace;
  std::vector<std::string> warnings;
  double max_bootstrap_divergence = 0.0;  // populated under debug_bootstrap
};

inline const char* terminal_mode_name(TerminalMode m) {
  return m == TerminalMode::Validated ? "validated" : "exact";
}

namespace detail {

inline std::uint64_t total_drawn(const std::vector<FeatureSampleState>& states) {
  std::uint64_t total = 0;
  for (const auto& st : states) total += st.drawn();
  return total;
}

inline void fill_feature_reports(ServeReport& report,
                                 const std::vector<FeatureEstimate>& estimates,
                                 std::size_t agg_count) {
  report.features.clear();
  for (std::size_t j = 0; j < agg_count; ++j) {
    const FeatureEstimate& e = estimates[j];
    report.features.push_back(
        FeatureReport{e.id, e.n, e.N, e.value, e.dist.sigma, e.exact()});
  }
}

}  // namespace detail

// Serves one request through the adaptive sampling loop. Deterministic for
// fixed (dataset, pipeline, request, config): every random choice derives
// from config.seed, the feature ids, and the request id.
inline ServeReport serve_request(const LoadedPipeline& lp, const RequestRecord& request,
                                 const RequestConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.check(lp.spec.task);

  ServeReport report;
  report.id = request.id;

  const std::size_t agg_count = lp.spec.features.size();
  std::vector<FeatureSampleState> states;
  states.reserve(agg_count);
  for (const AggregationSpec& f : lp.spec.features) {
    states.push_back(open_request_state(lp.dataset, f, request, cfg.seed));
    if (states.back().population() == 0) {
      report.warnings.push_back("feature '" + f.id +
                                "': partition key not found, treating as empty (N = 0)");
    }
    report.rows_exact +=
        f.op == AggOp::Count && f.predicate.empty() ? 0 : states.back().population();
  }

  // Pass-through features enter the vector as exact constants.
  std::vector<FeatureEstimate> estimates(agg_count + lp.spec.passthrough.size());
  for (std::size_t p = 0; p < lp.spec.passthrough.size(); ++p) {
    FeatureEstimate& e = estimates[agg_count + p];
    e.id = lp.spec.passthrough[p];
    e.value = field_as_double(request.field(lp.spec.passthrough[p]),
                              lp.spec.passthrough[p]);
    e.dist = UncertaintyDist::point_mass();
  }

  PlannerConfig pcfg;
  pcfg.alpha = cfg.alpha;
  pcfg.gamma = cfg.gamma;
  std::vector<std::uint64_t> populations(agg_count);
  for (std::size_t j = 0; j < agg_count; ++j) populations[j] = states[j].population();
  ApproximationPlan plan = initial_plan(populations, pcfg);
  const std::uint64_t step = step_rows(plan, pcfg);
  // Every iteration either validates or advances >= 1 feature by >= 1 row,
  // so the loop is bounded by total rows / step plus slack.
  [[maybe_unused]] const std::uint64_t iteration_cap = plan.total_rows() / step + 2;

  InferenceOutcome outcome;
  ValidationResult verdict;
  for (;;) {
    ++report.iterations;
    assert(report.iterations <= iteration_cap + 1);

    for (std::size_t j = 0; j < agg_count; ++j) {
      const std::uint64_t got = states[j].draw_to(plan.z[j]);
      if (got < plan.z[j]) {
        plan.z[j] = got;  // clamped at the population; not an error
      }
    }
    for (std::size_t j = 0; j < agg_count; ++j) {
      estimates[j] = estimate(lp.spec.features[j], states[j], cfg.bootstrap_b);
      if (cfg.debug_bootstrap && !is_holistic(lp.spec.features[j].op) &&
          !estimates[j].exact()) {
        const auto div =
            bootstrap_divergence(lp.spec.features[j], states[j], cfg.bootstrap_b);
        report.max_bootstrap_divergence =
            std::max(report.max_bootstrap_divergence, div.relative);
      }
    }

    std::size_t k = 0;
    for (std::size_t j = 0; j < estimates.size(); ++j) {
      if (!estimates[j].exact()) ++k;
    }
    if (k == 0) {
      QmcMatrices mats;
      mats.m = cfg.qmc_m;
      mats.base.resize(estimates.size());
      for (std::size_t j = 0; j < estimates.size(); ++j) mats.base[j] = estimates[j].value;
      outcome = propagate(lp.model, mats);
    } else {
      SobolGenerator gen(static_cast<int>(2 * k));
      QmcMatrices mats = build_saltelli(gen, cfg.qmc_m, estimates);
      outcome = propagate(lp.model, mats);
    }

    verdict = validate(outcome, cfg.delta, cfg.tau);
    IterationTrace tr;
    tr.achieved = verdict.achieved;
    tr.rows = detail::total_drawn(states);
    tr.output_sigma = outcome.uncertainty.classification
                          ? std::sqrt(outcome.uncertainty.failure_p *
                                      (1.0 - outcome.uncertainty.failure_p))
                          : outcome.uncertainty.sigma;
    if (verdict.passed) {
      report.trace.push_back(std::move(tr));
      break;
    }

    // Importance over matrix columns, scattered back onto plan features.
    // Pass-through and exact features carry zero importance by construction.
    const ImportanceVector column_importance = main_effect_indices(outcome);
    std::vector<double> feature_importance(agg_count, 0.0);
    {
      std::size_t col = 0;
      for (std::size_t j = 0; j < estimates.size(); ++j) {
        if (estimates[j].exact()) continue;
        if (j < agg_count) feature_importance[j] = column_importance[col];
        ++col;
      }
    }

    Direction dir = next_direction(feature_importance, plan);
    if (dir.empty()) {
      // Unreachable in normal operation: all features exhausted implies all
      // estimates exact, which validates with achieved = 1. Kept as a
      // defensive terminal path.
      report.trace.push_back(std::move(tr));
      break;
    }
    const double out_var = outcome.uncertainty.classification
                               ? outcome.uncertainty.failure_p *
                                     (1.0 - outcome.uncertainty.failure_p)
                               : outcome.stats.var_about_mean;
    tr.predicted_variance_drop =
        expected_variance_reduction(feature_importance, plan.z, plan.N, dir.dz, out_var);
    for (std::size_t j = 0; j < agg_count; ++j) {
      if (dir.dz[j] != 0) tr.stepped.push_back(lp.spec.features[j].id);
    }
    report.trace.push_back(std::move(tr));
    apply_step(plan, dir, step);
  }

  report.prediction = outcome.prediction;
  report.achieved = verdict.achieved;
  report.rows_scanned = detail::total_drawn(states);
  bool all_exact = true;
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    if (!estimates[j].exact()) all_exact = false;
  }
  report.mode = all_exact ? TerminalMode::Exact : TerminalMode::Validated;
  detail::fill_feature_reports(report, estimates, agg_count);

  const auto t1 = std::chrono::steady_clock::now();
  report.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return report;
}

// Exact baseline: every aggregation feature computed by a full partition
// scan, then a single model evaluation.
inline ServeReport exact_serve(const LoadedPipeline& lp, const RequestRecord& request) {
  const auto t0 = std::chrono::steady_clock::now();
  ServeReport report;
  report.id = request.id;
  report.mode = TerminalMode::Exact;
  report.iterations = 1;
  report.achieved = 1.0;

  const std::size_t agg_count = lp.spec.features.size();
  std::vector<double> x(agg_count + lp.spec.passthrough.size());
  for (std::size_t j = 0; j < agg_count; ++j) {
    const AggregationSpec& f = lp.spec.features[j];
    x[j] = exact_aggregate(lp.dataset, f, request, &report.rows_scanned);
    const Table& table = lp.dataset.table(f.table);
    const RowRange range = resolve_partition(table, f, request);
    report.features.push_back(FeatureReport{f.id, range.size(), range.size(), x[j], 0.0, true});
  }
  for (std::size_t p = 0; p < lp.spec.passthrough.size(); ++p) {
    x[agg_count + p] =
        field_as_double(request.field(lp.spec.passthrough[p]), lp.spec.passthrough[p]);
  }
  report.rows_exact = report.rows_scanned;
  report.prediction = predict(lp.model, x);

  const auto t1 = std::chrono::steady_clock::now();
  report.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return report;
}

}  // namespace apx
