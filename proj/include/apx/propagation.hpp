#pragma once

// Pushes feature uncertainty through the model: evaluates the Saltelli
// sample matrices, fits the output uncertainty (normal for regression,
// categorical for classification), and checks it against the requested
// error bound.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "apx/common.hpp"
#include "apx/model.hpp"
#include "apx/qmc.hpp"

namespace apx {

struct EnsembleStats {
  double mean = 0.0;
  // Spread about the ensemble mean (the fitted distribution's width) and
  // about the point prediction; both are recorded since they differ
  // whenever the ensemble is off-center.
  double var_about_mean = 0.0;
  double var_about_yhat = 0.0;
  std::size_t m = 0;
};

// Output-side uncertainty. Regression: Y - yhat ~ Normal(mu, sigma^2).
// Classification: the served class is wrong with probability failure_p;
// class_probs holds the ensemble's class frequencies.
struct OutcomeUncertainty {
  bool classification = false;
  bool inputs_exact = false;  // every feature was served exactly
  double mu = 0.0;
  double sigma = 0.0;
  double failure_p = 0.0;
  std::vector<double> class_probs;
};

struct InferenceOutcome {
  PredictionValue prediction;  // model at the point estimates
  EnsembleStats stats;
  OutcomeUncertainty uncertainty;
  // Cached per-row outcomes (regression value or class index) reused by the
  // importance estimator: f_a doubles as the uncertainty ensemble.
  std::vector<double> f_a;
  std::vector<double> f_b;
  std::vector<std::vector<double>> f_ab;  // one vector per matrix column
};

struct ValidationResult {
  bool passed = false;
  double achieved = 0.0;
};

namespace detail {

inline double outcome_scalar(const PredictionValue& p) {
  return p.task == Task::Regression ? p.value : static_cast<double>(p.class_index);
}

inline double checked_outcome(const ModelArtifact& model, const std::vector<double>& x,
                              EvalScratch& scratch, const char* matrix, std::size_t row) {
  eval_into(model, x, scratch);
  PredictionValue p = finalize_prediction(model, scratch);
  const double y = outcome_scalar(p);
  require(std::isfinite(y), std::string("model produced a non-finite output at ") +
                                matrix + " row " + std::to_string(row));
  return y;
}

}  // namespace detail

// Evaluates ensemble rows and fits the output uncertainty. The A-matrix
// evaluations double as the model-inference ensemble; AB[j] rows feed the
// later importance pass. With no sampled columns (all estimates exact) the
// ensemble is a single evaluation and the uncertainty collapses.
inline InferenceOutcome propagate(const ModelArtifact& model, const QmcMatrices& mats) {
  require(mats.base.size() == model.arity,
          "propagate: feature vector width " + std::to_string(mats.base.size()) +
              " does not match model arity " + std::to_string(model.arity));
  InferenceOutcome out;
  out.prediction = predict(model, mats.base);
  const double yhat = detail::outcome_scalar(out.prediction);

  const std::size_t rows = mats.k == 0 ? 1 : mats.m;
  out.f_a.resize(rows);
  out.f_b.resize(mats.k == 0 ? 0 : mats.m);
  out.f_ab.assign(mats.k, {});
  for (auto& v : out.f_ab) v.resize(mats.m);

  if (mats.k == 0) {
    out.f_a[0] = yhat;
  } else {
    parallel_for(mats.m, [&](std::size_t r) {
      thread_local detail::EvalScratch scratch;
      thread_local std::vector<double> x;
      mats.assemble_a(r, x);
      out.f_a[r] = detail::checked_outcome(model, x, scratch, "A", r);
      mats.assemble_b(r, x);
      out.f_b[r] = detail::checked_outcome(model, x, scratch, "B", r);
      for (std::size_t j = 0; j < mats.k; ++j) {
        mats.assemble_ab(j, r, x);
        out.f_ab[j][r] = detail::checked_outcome(model, x, scratch, "AB", r);
      }
    });
  }

  EnsembleStats& st = out.stats;
  st.m = out.f_a.size();
  double mean = 0.0;
  for (double y : out.f_a) mean += y;
  mean /= static_cast<double>(st.m);
  double v_mean = 0.0, v_yhat = 0.0;
  for (double y : out.f_a) {
    v_mean += (y - mean) * (y - mean);
    v_yhat += (y - yhat) * (y - yhat);
  }
  st.mean = mean;
  st.var_about_mean = v_mean / static_cast<double>(st.m);
  st.var_about_yhat = v_yhat / static_cast<double>(st.m);

  OutcomeUncertainty& u = out.uncertainty;
  u.inputs_exact = mats.k == 0;
  if (model.task == Task::Regression) {
    u.classification = false;
    u.mu = st.mean - yhat;
    u.sigma = std::sqrt(st.var_about_mean);
  } else {
    u.classification = true;
    u.class_probs.assign(model.out_width, 0.0);
    for (double y : out.f_a) {
      u.class_probs[static_cast<std::size_t>(y)] += 1.0;
    }
    for (double& p : u.class_probs) p /= static_cast<double>(st.m);
    u.failure_p = 1.0 - u.class_probs[static_cast<std::size_t>(out.prediction.class_index)];
  }
  return out;
}

// Probability that the served prediction is within delta of the true value,
// under the fitted uncertainty. Regression integrates the normal over
// (-delta, delta); classification requires delta = 0 and uses the served
// class's ensemble frequency. A finite ensemble over inexact inputs is
// evidence, not proof, so its achieved probability is kept strictly below
// one: tau = 1.0 is only satisfied once every feature is served exactly.
inline ValidationResult validate(const InferenceOutcome& outcome, double delta,
                                 double tau) {
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  require(delta >= 0.0, "delta must be non-negative");
  ValidationResult r;
  const OutcomeUncertainty& u = outcome.uncertainty;
  if (u.classification) {
    require(delta == 0.0, "classification validation requires delta = 0");
    r.achieved = 1.0 - u.failure_p;
  } else if (u.sigma == 0.0) {
    r.achieved = std::abs(u.mu) <= delta ? 1.0 : 0.0;
  } else {
    r.achieved = normal_cdf((delta - u.mu) / u.sigma) -
                 normal_cdf((-delta - u.mu) / u.sigma);
  }
  if (!u.inputs_exact) r.achieved = std::min(r.achieved, 1.0 - 1e-12);
  r.passed = r.achieved >= tau;
  return r;
}

}  // namespace apx
