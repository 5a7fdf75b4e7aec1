#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "apx/estimator.hpp"
#include "apx/importance.hpp"
#include "apx/model.hpp"
#include "apx/propagation.hpp"
#include "apx/qmc.hpp"
#include "apx/sobol.hpp"

using namespace apx;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Evenly spaced deltas interpolate to the exact uniform quantile on
// [-half, half], turning an empirical feature into a uniform one.
FeatureEstimate uniform_feature(const std::string& id, double half) {
  FeatureEstimate e;
  e.id = id;
  e.value = 0.0;
  std::vector<double> deltas;
  for (int i = 0; i <= 32; ++i) deltas.push_back(-half + 2.0 * half * i / 32.0);
  e.dist = UncertaintyDist::empirical(std::move(deltas));
  return e;
}

FeatureEstimate normal_feature(const std::string& id, double value, double sigma) {
  FeatureEstimate e;
  e.id = id;
  e.value = value;
  e.dist = UncertaintyDist::normal(sigma);
  return e;
}

FeatureEstimate exact_feature(const std::string& id, double value) {
  FeatureEstimate e;
  e.id = id;
  e.value = value;
  e.dist = UncertaintyDist::point_mass();
  return e;
}

double ishigami(const std::vector<double>& x, double a, double b) {
  return std::sin(x[0]) + a * std::sin(x[1]) * std::sin(x[1]) +
         b * x[2] * x[2] * x[2] * x[2] * std::sin(x[0]);
}

// Builds the outcome by evaluating an arbitrary function over the Saltelli
// matrices, the same wiring the engine uses with a model artifact.
template <typename F>
InferenceOutcome outcome_from_function(const QmcMatrices& mats, F&& f) {
  InferenceOutcome out;
  out.f_a.resize(mats.m);
  out.f_b.resize(mats.m);
  out.f_ab.assign(mats.k, std::vector<double>(mats.m));
  std::vector<double> x;
  for (std::size_t r = 0; r < mats.m; ++r) {
    mats.assemble_a(r, x);
    out.f_a[r] = f(x);
    mats.assemble_b(r, x);
    out.f_b[r] = f(x);
    for (std::size_t j = 0; j < mats.k; ++j) {
      mats.assemble_ab(j, r, x);
      out.f_ab[j][r] = f(x);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("main effects recover the Ishigami closed form", "[importance]") {
  const double a = 7.0, b = 0.1;
  // Analytic first-order indices for inputs uniform on (-pi, pi)^3.
  const double pi4 = kPi * kPi * kPi * kPi;
  const double pi8 = pi4 * pi4;
  const double total = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
  const double s1 = 0.5 * (1.0 + b * pi4 / 5.0) * (1.0 + b * pi4 / 5.0) / total;
  const double s2 = a * a / 8.0 / total;

  std::vector<FeatureEstimate> ests = {uniform_feature("x1", kPi),
                                       uniform_feature("x2", kPi),
                                       uniform_feature("x3", kPi)};
  SobolGenerator gen(6);
  const QmcMatrices mats = build_saltelli(gen, 1 << 13, ests);
  const InferenceOutcome out =
      outcome_from_function(mats, [&](const std::vector<double>& x) {
        return ishigami(x, a, b);
      });

  const ImportanceVector idx = main_effect_indices(out);
  REQUIRE(idx.size() == 3);
  CHECK(idx[0] == Catch::Approx(s1).margin(0.02));
  CHECK(idx[1] == Catch::Approx(s2).margin(0.02));
  // x3 only acts through its interaction with x1; its main effect is zero.
  CHECK(idx[2] <= 0.02);
}

TEST_CASE("main effects of a linear model split by squared weight times variance",
          "[importance]") {
  ModelArtifact m;
  m.task = Task::Regression;
  m.kind = ModelKind::Linear;
  m.arity = 3;
  m.body_width = 3;
  m.linear.weights = {2.0, -1.0, 0.5};
  m.linear.bias = {0.0};
  validate_model(m);

  const std::vector<double> sig = {0.3, 0.8, 1.4};
  std::vector<FeatureEstimate> ests = {normal_feature("f0", 1.0, sig[0]),
                                       normal_feature("f1", 2.0, sig[1]),
                                       normal_feature("f2", 3.0, sig[2])};
  SobolGenerator gen(6);
  const QmcMatrices mats = build_saltelli(gen, 1 << 13, ests);
  const InferenceOutcome out = propagate(m, mats);
  const ImportanceVector idx = main_effect_indices(out);

  double total = 0.0;
  std::vector<double> want(3);
  for (int j = 0; j < 3; ++j) {
    want[j] = m.linear.weights[j] * m.linear.weights[j] * sig[j] * sig[j];
    total += want[j];
  }
  REQUIRE(idx.size() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(idx[j] == Catch::Approx(want[j] / total).margin(0.02));
  }
}

TEST_CASE("indices are scale invariant and clipped to the unit interval",
          "[importance]") {
  std::vector<FeatureEstimate> ests = {normal_feature("f0", 0.0, 1.0),
                                       normal_feature("f1", 0.0, 0.5)};
  SobolGenerator gen(4);
  const QmcMatrices mats = build_saltelli(gen, 1024, ests);
  const InferenceOutcome base =
      outcome_from_function(mats, [](const std::vector<double>& x) {
        return 3.0 * x[0] - x[1];
      });

  InferenceOutcome scaled = base;
  for (double& y : scaled.f_a) y *= 7.25;
  for (double& y : scaled.f_b) y *= 7.25;
  for (auto& col : scaled.f_ab) {
    for (double& y : col) y *= 7.25;
  }

  const ImportanceVector bi = main_effect_indices(base);
  const ImportanceVector si = main_effect_indices(scaled);
  REQUIRE(bi.size() == si.size());
  for (std::size_t j = 0; j < bi.size(); ++j) {
    CHECK(si[j] == Catch::Approx(bi[j]).epsilon(1e-9));
    CHECK(bi[j] >= 0.0);
    CHECK(bi[j] <= 1.0);
  }
}

TEST_CASE("degenerate ensembles yield zero importance", "[importance]") {
  SECTION("constant outcomes have no variance to attribute") {
    std::vector<FeatureEstimate> ests = {normal_feature("f0", 0.0, 1.0)};
    SobolGenerator gen(2);
    const QmcMatrices mats = build_saltelli(gen, 256, ests);
    const InferenceOutcome out =
        outcome_from_function(mats, [](const std::vector<double>&) { return 42.0; });
    const ImportanceVector idx = main_effect_indices(out);
    REQUIRE(idx.size() == 1);
    CHECK(idx[0] == 0.0);
  }

  SECTION("no approximated features means no entries") {
    InferenceOutcome out;
    out.f_a = {1.0};
    CHECK(main_effect_indices(out).empty());
  }
}

TEST_CASE("classification importance ranks decision drivers", "[importance]") {
  // Class boundary at x0 + x1 = 0; only x0 is uncertain, so all of the
  // decision variance belongs to it.
  ModelArtifact m;
  m.task = Task::Classification;
  m.kind = ModelKind::Linear;
  m.arity = 2;
  m.body_width = 2;
  m.out_width = 2;
  m.linear.weights = {-1.0, -1.0, 1.0, 1.0};
  m.linear.bias = {0.0, 0.0};
  validate_model(m);

  std::vector<FeatureEstimate> ests = {normal_feature("f0", 0.3, 1.0),
                                       exact_feature("f1", 0.0)};
  SobolGenerator gen(2);
  const QmcMatrices mats = build_saltelli(gen, 4096, ests);
  const InferenceOutcome out = propagate(m, mats);
  REQUIRE(out.uncertainty.classification);

  const ImportanceVector idx = main_effect_indices(out);
  REQUIRE(idx.size() == 1);
  CHECK(idx[0] == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("projected variance reduction weighs importance per remaining row",
          "[importance]") {
  const ImportanceVector imp = {0.5, 0.2, 0.3};
  const std::vector<std::uint64_t> z = {10, 100, 40};
  const std::vector<std::uint64_t> N = {100, 100, 200};
  const std::vector<std::uint64_t> dz = {30, 50, 0};

  // Feature 0: 0.5 / 90 * 30. Feature 1 is exhausted, feature 2 gets no
  // rows; neither contributes.
  const double want = 0.5 / 90.0 * 30.0 * 2.0;
  CHECK(expected_variance_reduction(imp, z, N, dz, 2.0) ==
        Catch::Approx(want).epsilon(1e-12));
  CHECK(expected_variance_reduction(imp, z, N, dz, 0.0) == 0.0);

  CHECK_THROWS_WITH(expected_variance_reduction({0.5}, z, N, dz, 1.0),
                    Catch::Matchers::ContainsSubstring("size mismatch"));
}
