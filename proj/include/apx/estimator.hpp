#pragma once

// Turns sampler state into a value estimate with a calibrated uncertainty
// distribution. SUM/COUNT/AVG/VAR/STD use closed-form normal estimators with
// the finite-population correction; MEDIAN/QUANTILE use an empirical
// bootstrap over the drawn values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "apx/aggregate.hpp"
#include "apx/common.hpp"
#include "apx/sampling.hpp"

namespace apx {

inline constexpr std::uint32_t kDefaultBootstrapB = 200;
inline constexpr std::uint32_t kMinBootstrapB = 10;

enum class DistKind : std::uint8_t { Normal, Empirical, PointMass };

// Uncertainty around the estimate. Normal is centered at zero; Empirical
// holds ascending-sorted bootstrap deltas (replicate minus estimate);
// PointMass means the value is known exactly.
struct UncertaintyDist {
  DistKind kind = DistKind::PointMass;
  double sigma = 0.0;
  std::vector<double> deltas;

  static UncertaintyDist point_mass() { return UncertaintyDist{}; }

  static UncertaintyDist normal(double sigma) {
    // A zero-width normal carries no uncertainty; collapse it so downstream
    // consumers have a single exactness representation.
    if (!(sigma > 0.0)) return point_mass();
    return UncertaintyDist{DistKind::Normal, sigma, {}};
  }

  static UncertaintyDist empirical(std::vector<double> sorted_deltas) {
    bool all_zero = true;
    for (double d : sorted_deltas) {
      if (d != 0.0) {
        all_zero = false;
        break;
      }
    }
    if (sorted_deltas.empty() || all_zero) return point_mass();
    UncertaintyDist u;
    u.kind = DistKind::Empirical;
    u.deltas = std::move(sorted_deltas);
    // Summary spread for reporting and importance bookkeeping.
    double s2 = 0.0, mean = 0.0;
    for (double d : u.deltas) mean += d;
    mean /= static_cast<double>(u.deltas.size());
    for (double d : u.deltas) s2 += (d - mean) * (d - mean);
    u.sigma = std::sqrt(s2 / static_cast<double>(u.deltas.size()));
    return u;
  }

  bool point() const { return kind == DistKind::PointMass; }
};

struct FeatureEstimate {
  std::string id;
  double value = 0.0;
  UncertaintyDist dist;
  std::uint64_t n = 0;
  std::uint64_t N = 0;

  bool exact() const { return dist.point(); }
};

namespace detail {

// Moments of the zero-masked value stream (non-matching rows contribute 0),
// which is what the SUM scale-up estimator is distributed over.
inline const MomentAccumulator& masked_moments(const FeatureSampleState& st) {
  return st.has_predicate() ? st.accumulators().masked : st.accumulators().matched;
}

inline double clamp_nonneg(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace detail

// Bootstrap estimate for holistic operators: B resamples with replacement
// of size n from the drawn (matched) values; deltas are replicate minus
// point estimate, sorted ascending. Resampling is seeded from the state's
// base seed and current n, so reports are reproducible.
inline FeatureEstimate bootstrap_estimate(const AggregationSpec& spec,
                                          const FeatureSampleState& st,
                                          std::uint32_t b = kDefaultBootstrapB) {
  require(b >= kMinBootstrapB,
          "bootstrap replicate count must be at least " + std::to_string(kMinBootstrapB));
  FeatureEstimate est;
  est.id = spec.id;
  est.n = st.drawn();
  est.N = st.population();

  std::vector<double> values = st.retained_values();
  if (values.empty()) {
    est.value = 0.0;
    est.dist = UncertaintyDist::point_mass();
    return est;
  }
  std::sort(values.begin(), values.end());
  const double q = spec.op == AggOp::Median ? 0.5 : spec.quantile;
  est.value = quantile_sorted(values, q);
  if (est.n == est.N) {
    est.dist = UncertaintyDist::point_mass();
    return est;
  }

  const std::size_t n = values.size();
  SplitMix rng(mix64(st.base_seed(), 0xb005u, st.drawn()));
  std::vector<double> resample(n);
  std::vector<double> deltas(b);
  for (std::uint32_t rep = 0; rep < b; ++rep) {
    for (std::size_t i = 0; i < n; ++i) {
      resample[i] = values[rng.below(n)];
    }
    std::sort(resample.begin(), resample.end());
    deltas[rep] = quantile_sorted(resample, q) - est.value;
  }
  std::sort(deltas.begin(), deltas.end());
  est.dist = UncertaintyDist::empirical(std::move(deltas));
  return est;
}

// Closed-form estimate with finite-population correction fpc = (N - n) / N.
// A fully drawn feature finalizes through the exact-scan path, so its value
// matches exact_aggregate bitwise.
inline FeatureEstimate estimate(const AggregationSpec& spec,
                                const FeatureSampleState& st,
                                std::uint32_t bootstrap_b = kDefaultBootstrapB) {
  if (is_holistic(spec.op)) return bootstrap_estimate(spec, st, bootstrap_b);

  FeatureEstimate est;
  est.id = spec.id;
  est.n = st.drawn();
  est.N = st.population();
  const auto& acc = st.accumulators();

  if (est.N == 0 || est.n == est.N) {
    // Includes the empty-partition case, which defines every operator to 0.
    est.value = finalize_exact(spec, acc, est.N);
    est.dist = UncertaintyDist::point_mass();
    return est;
  }
  require(est.n >= 2, "feature '" + spec.id + "': estimate needs n >= 2, have n = " +
                          std::to_string(est.n));

  const double n = static_cast<double>(est.n);
  const double N = static_cast<double>(est.N);
  const double fpc = (N - n) / N;
  const MomentAccumulator& matched = acc.matched;
  // Matched-count guard: with a selective predicate the matched subsample
  // can be smaller than n; variance terms use what was actually observed.
  const double c = static_cast<double>(matched.count);

  switch (spec.op) {
    case AggOp::Count: {
      const double p = c / n;
      est.value = N * p;
      est.dist = UncertaintyDist::normal(N * std::sqrt(p * (1.0 - p) / n * fpc));
      break;
    }
    case AggOp::Sum: {
      const MomentAccumulator& masked = detail::masked_moments(st);
      est.value = N * masked.mean;
      est.dist =
          UncertaintyDist::normal(N * std::sqrt(masked.sample_variance() / n * fpc));
      break;
    }
    case AggOp::Avg: {
      est.value = matched.count == 0 ? 0.0 : matched.mean;
      const double s2 = matched.sample_variance();
      est.dist = matched.count == 0
                     ? UncertaintyDist::point_mass()
                     : UncertaintyDist::normal(std::sqrt(s2 / c * fpc));
      break;
    }
    case AggOp::Var: {
      const double s2 = matched.sample_variance();
      est.value = s2;
      const double m4 = matched.fourth_moment();
      const double var_of_var = detail::clamp_nonneg((m4 - s2 * s2) / c) * fpc;
      est.dist = matched.count == 0 ? UncertaintyDist::point_mass()
                                    : UncertaintyDist::normal(std::sqrt(var_of_var));
      break;
    }
    case AggOp::Std: {
      const double s2 = matched.sample_variance();
      const double s = std::sqrt(s2);
      est.value = s;
      if (s <= 1e-12 || matched.count == 0) {
        est.dist = UncertaintyDist::point_mass();
        break;
      }
      const double m4 = matched.fourth_moment();
      const double sigma_var =
          std::sqrt(detail::clamp_nonneg((m4 - s2 * s2) / c) * fpc);
      // Delta method: sd(s) = sd(s^2) / (2 s).
      est.dist = UncertaintyDist::normal(sigma_var / (2.0 * s));
      break;
    }
    case AggOp::Median:
    case AggOp::Quantile:
      fail("holistic operator reached closed-form path");
  }
  return est;
}

// Diagnostic used to compare the closed-form normal width against a
// bootstrap of the same operator. Returns the relative divergence between
// the closed-form sigma and the bootstrap deltas' central 68% half-width;
// large values flag operators whose normal approximation is strained.
struct BootstrapDivergence {
  double closed_sigma = 0.0;
  double bootstrap_sigma = 0.0;
  double relative = 0.0;
};

inline BootstrapDivergence bootstrap_divergence(const AggregationSpec& spec,
                                                const FeatureSampleState& st,
                                                std::uint32_t b = kDefaultBootstrapB) {
  require(!is_holistic(spec.op), "divergence check applies to closed-form operators");
  require(b >= kMinBootstrapB,
          "bootstrap replicate count must be at least " + std::to_string(kMinBootstrapB));
  BootstrapDivergence out;
  const FeatureEstimate closed = estimate(spec, st, b);
  out.closed_sigma = closed.dist.sigma;
  if (closed.exact()) return out;

  const std::uint64_t n = st.drawn();
  const double N = static_cast<double>(st.population());
  std::vector<double> values(n);
  std::vector<bool> matched(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    values[i] = st.drawn_value(i);
    matched[i] = st.drawn_matched(i);
  }

  SplitMix rng(mix64(st.base_seed(), 0xd1a6u, n));
  std::vector<double> reps(b);
  AggAccumulators acc;
  for (std::uint32_t rep = 0; rep < b; ++rep) {
    acc.reset();
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint64_t j = rng.below(n);
      ++acc.scanned;
      if (matched[j]) acc.matched.add(values[j]);
      acc.masked.add(matched[j] ? values[j] : 0.0);
    }
    switch (spec.op) {
      case AggOp::Count:
        reps[rep] = N * (static_cast<double>(acc.matched.count) / static_cast<double>(n));
        break;
      case AggOp::Sum:
        reps[rep] = N * (st.has_predicate() ? acc.masked.mean : acc.matched.mean);
        break;
      case AggOp::Avg:
        reps[rep] = acc.matched.count == 0 ? 0.0 : acc.matched.mean;
        break;
      case AggOp::Var:
        reps[rep] = acc.matched.sample_variance();
        break;
      case AggOp::Std:
        reps[rep] = std::sqrt(acc.matched.sample_variance());
        break;
      default:
        break;
    }
  }
  std::sort(reps.begin(), reps.end());
  // Central 68% half-width, the bootstrap analog of one sigma.
  const double lo = quantile_sorted(reps, 0.158655);
  const double hi = quantile_sorted(reps, 0.841345);
  out.bootstrap_sigma = 0.5 * (hi - lo);
  const double denom = std::max(out.closed_sigma, 1e-300);
  out.relative = std::abs(out.bootstrap_sigma - out.closed_sigma) / denom;
  return out;
}

}  // namespace apx
