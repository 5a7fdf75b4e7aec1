#pragma once

// Quasi-Monte Carlo plumbing: normal CDF and its inverse, and the Saltelli
// A/B/AB[j] matrix construction that maps low-discrepancy uniforms into
// feature space through each feature's uncertainty distribution.

#include <cmath>
#include <cstdint>
#include <vector>

#include "apx/common.hpp"
#include "apx/estimator.hpp"
#include "apx/sobol.hpp"

namespace apx {

inline constexpr std::uint32_t kDefaultQmcM = 1000;
inline constexpr std::uint32_t kMinQmcM = 64;

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.7071067811865475244);
}

// Inverse standard normal CDF (Wichura's AS 241, double-precision branch).
// Absolute error in the round trip |Phi(z) - u| stays below 1e-9.
inline double inverse_normal_cdf(double u) {
  require(u > 0.0 && u < 1.0, "inverse normal CDF needs u in (0, 1)");
  const double q = u - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? u : 1.0 - u;
  r = std::sqrt(-std::log(r));
  double z;
  if (r <= 5.0) {
    r -= 1.6;
    z = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    z = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -z : z;
}

// Per-feature quantile transform of a uniform draw. Normal perturbs by
// sigma * Phi^-1(u); Empirical interpolates the sorted bootstrap deltas;
// PointMass never reaches here (those features are held constant).
inline double uncertainty_quantile(const UncertaintyDist& dist, double u) {
  switch (dist.kind) {
    case DistKind::Normal:
      return dist.sigma * inverse_normal_cdf(u);
    case DistKind::Empirical:
      return quantile_sorted(dist.deltas, u);
    case DistKind::PointMass:
      return 0.0;
  }
  return 0.0;
}

// Saltelli sample matrices in feature space. A and B are m x k (row-major)
// over the k approximated (non-PointMass) features; AB[j] is A with column
// j taken from B. `column_feature` maps matrix column -> index into the
// full feature vector, whose constant values live in `base`.
struct QmcMatrices {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<std::size_t> column_feature;
  std::vector<double> base;
  std::vector<double> a;
  std::vector<double> b;

  double a_at(std::size_t row, std::size_t col) const { return a[row * k + col]; }
  double b_at(std::size_t row, std::size_t col) const { return b[row * k + col]; }

  // Full feature vector for row `row` of A, written into out.
  void assemble_a(std::size_t row, std::vector<double>& out) const {
    out = base;
    for (std::size_t c = 0; c < k; ++c) out[column_feature[c]] = a_at(row, c);
  }

  void assemble_b(std::size_t row, std::vector<double>& out) const {
    out = base;
    for (std::size_t c = 0; c < k; ++c) out[column_feature[c]] = b_at(row, c);
  }

  // AB[j]: row of A with column j swapped from B.
  void assemble_ab(std::size_t j, std::size_t row, std::vector<double>& out) const {
    assemble_a(row, out);
    out[column_feature[j]] = b_at(row, j);
  }
};

// Draws m points from a 2k-dimensional Sobol stream and maps the first k
// coordinates through the uncertainty quantiles into A, the last k into B.
// Estimates with PointMass uncertainty stay fixed at their value in `base`
// and consume no Sobol dimensions.
inline QmcMatrices build_saltelli(SobolGenerator& gen, std::size_t m,
                                  const std::vector<FeatureEstimate>& estimates) {
  require(m >= kMinQmcM, "QMC sample count must be at least " +
                             std::to_string(kMinQmcM) + ", got " + std::to_string(m));
  QmcMatrices out;
  out.m = m;
  out.base.resize(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    out.base[i] = estimates[i].value;
    if (!estimates[i].exact()) out.column_feature.push_back(i);
  }
  out.k = out.column_feature.size();
  if (out.k == 0) return out;

  require(gen.dim() == static_cast<int>(2 * out.k),
          "Sobol generator dimension must be 2k = " + std::to_string(2 * out.k) +
              ", got " + std::to_string(gen.dim()));
  out.a.resize(m * out.k);
  out.b.resize(m * out.k);
  std::vector<double> point(2 * out.k);
  for (std::size_t row = 0; row < m; ++row) {
    gen.next_point(point.data());
    for (std::size_t c = 0; c < out.k; ++c) {
      const UncertaintyDist& dist = estimates[out.column_feature[c]].dist;
      const double center = out.base[out.column_feature[c]];
      out.a[row * out.k + c] = center + uncertainty_quantile(dist, point[c]);
      out.b[row * out.k + c] = center + uncertainty_quantile(dist, point[out.k + c]);
    }
  }
  return out;
}

}  // namespace apx
