#pragma once

// First-order (main-effect) Sobol indices over the approximated features,
// estimated from the cached A/B/AB[j] model outcomes, plus the projected
// variance drop used to rank candidate sampling steps.

#include <cmath>
#include <cstdint>
#include <vector>

#include "apx/common.hpp"
#include "apx/propagation.hpp"

namespace apx {

// One entry per approximated feature (matrix column), each clipped to
// [0, 1]. For classification the outcomes are first mapped to indicators
// of agreement with the served class, so indices rank how much each
// feature's uncertainty drives the class decision.
using ImportanceVector = std::vector<double>;

inline constexpr double kImportanceVarFloor = 1e-12;

inline ImportanceVector main_effect_indices(const InferenceOutcome& outcome) {
  const std::size_t k = outcome.f_ab.size();
  ImportanceVector indices(k, 0.0);
  if (k == 0) return indices;
  const std::size_t m = outcome.f_b.size();

  const bool cls = outcome.uncertainty.classification;
  const double target = cls ? static_cast<double>(outcome.prediction.class_index) : 0.0;
  auto mapped = [&](double y) { return cls ? (y == target ? 1.0 : 0.0) : y; };

  double mean_a = 0.0;
  for (std::size_t r = 0; r < m; ++r) mean_a += mapped(outcome.f_a[r]);
  mean_a /= static_cast<double>(m);
  double var_a = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double d = mapped(outcome.f_a[r]) - mean_a;
    var_a += d * d;
  }
  var_a /= static_cast<double>(m);
  // A near-constant ensemble has no variance to attribute.
  if (var_a < kImportanceVarFloor) return indices;

  for (std::size_t j = 0; j < k; ++j) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      acc += mapped(outcome.f_b[r]) * (mapped(outcome.f_ab[j][r]) - mapped(outcome.f_a[r]));
    }
    const double idx = acc / static_cast<double>(m) / var_a;
    indices[j] = std::min(1.0, std::max(0.0, idx));
  }
  return indices;
}

// Projected output-variance reduction for a candidate allocation step:
// sum_j (I_j / (N_j - z_j)) * dz_j, scaled by the current output variance.
// Exhausted features contribute nothing.
inline double expected_variance_reduction(const ImportanceVector& importance,
                                          const std::vector<std::uint64_t>& z,
                                          const std::vector<std::uint64_t>& N,
                                          const std::vector<std::uint64_t>& dz,
                                          double output_variance) {
  require(importance.size() == z.size() && z.size() == N.size() &&
              N.size() == dz.size(),
          "expected_variance_reduction: vector size mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] >= N[j] || dz[j] == 0) continue;
    acc += importance[j] / static_cast<double>(N[j] - z[j]) *
           static_cast<double>(dz[j]);
  }
  return acc * output_variance;
}

}  // namespace apx
