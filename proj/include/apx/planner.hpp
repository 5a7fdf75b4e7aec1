#pragma once

// Sample-allocation planner: seeds an initial per-feature draw, then walks
// toward exactness along the direction with the best projected variance
// reduction per row scanned.

#include <cmath>
#include <cstdint>
#include <vector>

#include "apx/common.hpp"

namespace apx {

struct PlannerConfig {
  double alpha = 0.05;   // initial sampling fraction
  double gamma = 0.01;   // step size as a fraction of total rows
  std::uint64_t min_initial = 2;
};

// Per-feature allocation state: z rows drawn (or planned) out of N.
struct ApproximationPlan {
  std::vector<std::uint64_t> z;
  std::vector<std::uint64_t> N;

  std::uint64_t total_rows() const {
    std::uint64_t t = 0;
    for (std::uint64_t n : N) t += n;
    return t;
  }

  bool all_exhausted() const {
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (z[j] < N[j]) return false;
    }
    return true;
  }
};

// Unit step direction: dz_j in {0, 1}, never set on an exhausted feature.
struct Direction {
  std::vector<std::uint64_t> dz;

  bool empty() const {
    for (std::uint64_t d : dz) {
      if (d != 0) return false;
    }
    return true;
  }
};

inline ApproximationPlan initial_plan(const std::vector<std::uint64_t>& N,
                                      const PlannerConfig& cfg) {
  require(cfg.alpha > 0.0 && cfg.alpha <= 1.0, "alpha must lie in (0, 1]");
  ApproximationPlan plan;
  plan.N = N;
  plan.z.resize(N.size());
  for (std::size_t j = 0; j < N.size(); ++j) {
    if (N[j] == 0) {
      plan.z[j] = 0;
      continue;
    }
    const auto frac = static_cast<std::uint64_t>(
        std::ceil(cfg.alpha * static_cast<double>(N[j])));
    plan.z[j] = std::min(N[j], std::max(cfg.min_initial, frac));
  }
  return plan;
}

// Step size in rows, fixed for the whole run of one request: a gamma
// fraction of the total row count across features, at least one row.
inline std::uint64_t step_rows(const ApproximationPlan& plan, const PlannerConfig& cfg) {
  require(cfg.gamma > 0.0 && cfg.gamma <= 1.0, "gamma must lie in (0, 1]");
  const double total = static_cast<double>(plan.total_rows());
  const auto g = static_cast<std::uint64_t>(std::ceil(cfg.gamma * total));
  return g == 0 ? 1 : g;
}

// Picks the features maximizing marginal variance reduction per row,
// r_j = I_j / (N_j - z_j), over unexhausted features. All features within
// relative 1e-12 of the maximum are selected, so exact ties advance
// together. Returns an all-zero direction when every feature is exhausted.
inline Direction next_direction(const std::vector<double>& importance,
                                const ApproximationPlan& plan) {
  require(importance.size() == plan.z.size(),
          "next_direction: importance size does not match plan");
  Direction dir;
  dir.dz.assign(plan.z.size(), 0);
  double r_max = -1.0;
  std::vector<double> r(plan.z.size(), -1.0);
  for (std::size_t j = 0; j < plan.z.size(); ++j) {
    if (plan.z[j] >= plan.N[j]) continue;
    r[j] = importance[j] / static_cast<double>(plan.N[j] - plan.z[j]);
    if (r[j] > r_max) r_max = r[j];
  }
  if (r_max < 0.0) return dir;  // everything exhausted
  const double cutoff = r_max - 1e-12 * std::abs(r_max);
  for (std::size_t j = 0; j < plan.z.size(); ++j) {
    if (r[j] >= cutoff && r[j] >= 0.0) dir.dz[j] = 1;
  }
  return dir;
}

// Advances the plan by `step` rows along each selected feature, clamped to
// the population. z never decreases and never exceeds N.
inline void apply_step(ApproximationPlan& plan, const Direction& dir,
                       std::uint64_t step) {
  require(dir.dz.size() == plan.z.size(), "apply_step: direction size mismatch");
  for (std::size_t j = 0; j < plan.z.size(); ++j) {
    if (dir.dz[j] == 0) continue;
    require(plan.z[j] < plan.N[j], "apply_step: direction selects an exhausted feature");
    const std::uint64_t room = plan.N[j] - plan.z[j];
    plan.z[j] += std::min(room, dir.dz[j] * step);
  }
}

}  // namespace apx
