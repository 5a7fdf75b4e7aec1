#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "apx/engine.hpp"
#include "apx/pipeline.hpp"
#include "apx/report.hpp"

#include "test_util.hpp"

using namespace apx;
using testutil::TempDir;
using testutil::write_file;

namespace {

// Regression pipeline over one noisy AVG feature plus a pass-through:
// y = AVG(v | g) + 0.5 * p0 over a 400-row partition.
void write_regression_fixture(const TempDir& dir, bool constant_values) {
  std::ostringstream csv;
  csv << "g,v\n";
  for (int i = 0; i < 400; ++i) {
    const double v = constant_values ? 5.0 : 5.0 + 2.0 * std::sin(0.7 * i);
    csv << "1," << v << "\n";
  }
  for (int i = 0; i < 50; ++i) {
    csv << "2," << (1.0 + 0.1 * i) << "\n";
  }
  write_file(dir.file("t.csv"), csv.str());
  write_file(dir.file("manifest.json"), R"({
  "tables": [
    {"name": "t", "file": "t.csv", "partition_key": "g",
     "columns": [{"name": "g", "type": "int64"},
                 {"name": "v", "type": "float64"}]}
  ]
})");
  write_file(dir.file("model.json"), R"({
  "task": "regression",
  "kind": "linear",
  "arity": 2,
  "transforms": [],
  "body": {"weights": [1.0, 0.5], "bias": 0.0}
})");
  write_file(dir.file("pipeline.json"), R"({
  "name": "engine-fixture",
  "dataset": "manifest.json",
  "model": "model.json",
  "task": "regression",
  "features": [
    {"id": "f0", "table": "t", "op": "AVG", "column": "v",
     "partition_by": {"request_field": "g"}}
  ],
  "passthrough": ["p0"],
  "delta": 0.2
})");
}

RequestRecord request(std::int64_t id, std::int64_t g, double p0) {
  RequestRecord r;
  r.id = id;
  r.fields.emplace("g", FieldValue{g});
  r.fields.emplace("p0", FieldValue{p0});
  return r;
}

RequestConfig config(double tau, double delta) {
  RequestConfig cfg;
  cfg.tau = tau;
  cfg.delta = delta;
  cfg.gamma = 0.05;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("constant features validate exactly on the first pass", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, true);
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  const RequestRecord req = request(1, 1, 2.0);

  const ServeReport r = serve_request(lp, req, config(0.99, 0.2));
  CHECK(r.iterations == 1);
  CHECK(r.mode == TerminalMode::Exact);
  CHECK(r.achieved == 1.0);
  // A constant column is known exactly from any subsample.
  CHECK(r.rows_scanned < 400);
  CHECK(r.prediction.value == exact_serve(lp, req).prediction.value);
  CHECK(r.prediction.value == 6.0);
}

TEST_CASE("the loop stops as soon as the bound is met", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, false);
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  const RequestRecord req = request(3, 1, 0.0);

  const ServeReport r = serve_request(lp, req, config(0.9, 0.2));
  CHECK(r.mode == TerminalMode::Validated);
  CHECK(r.achieved >= 0.9);
  CHECK(r.rows_scanned < r.rows_exact);
  CHECK(r.rows_exact == 400);
  REQUIRE(r.trace.size() == r.iterations);
  CHECK(r.trace.back().achieved == r.achieved);
  CHECK(r.trace.back().rows == r.rows_scanned);

  // Every non-final iteration failed the check and stepped some feature.
  for (std::size_t i = 0; i + 1 < r.trace.size(); ++i) {
    CHECK(r.trace[i].achieved < 0.9);
    CHECK_FALSE(r.trace[i].stepped.empty());
    CHECK(r.trace[i].rows < r.trace[i + 1].rows);
  }

  SECTION("feature reports account for the drawn rows") {
    // Pass-through fields are exact constants and are not reported as
    // sampled features.
    REQUIRE(r.features.size() == 1);
    CHECK(r.features[0].id == "f0");
    CHECK(r.features[0].n == r.rows_scanned);
    CHECK(r.features[0].N == 400);
    CHECK_FALSE(r.features[0].exact);
    CHECK(r.features[0].sigma > 0.0);
  }
}

TEST_CASE("row cost rises with tau and falls with delta", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, false);
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  const RequestRecord req = request(5, 1, 1.0);

  SECTION("tighter confidence needs more rows") {
    std::uint64_t prev = 0;
    for (double tau : {0.5, 0.9, 0.95, 0.99}) {
      const ServeReport r = serve_request(lp, req, config(tau, 0.2));
      CHECK(r.achieved >= tau);
      CHECK(r.rows_scanned >= prev);
      prev = r.rows_scanned;
    }
  }

  SECTION("looser error bounds need fewer rows") {
    std::uint64_t prev = UINT64_MAX;
    for (double delta : {0.05, 0.2, 1.0}) {
      const ServeReport r = serve_request(lp, req, config(0.95, delta));
      CHECK(r.rows_scanned <= prev);
      prev = r.rows_scanned;
    }
  }
}

TEST_CASE("tau = 1 serves through the exact path bit for bit", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, false);
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  const RequestRecord req = request(8, 1, 3.0);

  const ServeReport r = serve_request(lp, req, config(1.0, 0.2));
  const ServeReport ex = exact_serve(lp, req);
  CHECK(r.mode == TerminalMode::Exact);
  CHECK(r.rows_scanned == 400);
  CHECK(r.achieved == 1.0);
  CHECK(r.prediction.value == ex.prediction.value);
  CHECK(r.features[0].value == ex.features[0].value);
  CHECK(ex.rows_scanned == 400);
}

TEST_CASE("serving is deterministic in the seed", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, false);
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  const RequestRecord req = request(11, 1, 0.5);

  auto dump = [&](const RequestConfig& cfg) {
    nlohmann::ordered_json j = serve_report_to_json(serve_request(lp, req, cfg));
    strip_timing_fields(j);
    return j.dump();
  };

  const RequestConfig cfg = config(0.9, 0.2);
  CHECK(dump(cfg) == dump(cfg));

  RequestConfig other = cfg;
  other.seed = 8;
  // A different seed draws different rows, so the partial estimate moves.
  const ServeReport a = serve_request(lp, req, cfg);
  const ServeReport b = serve_request(lp, req, other);
  CHECK(a.features[0].value != b.features[0].value);
}

TEST_CASE("unknown partition keys warn and serve zeros", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, false);
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  const RequestRecord req = request(13, 999, 4.0);

  const ServeReport r = serve_request(lp, req, config(0.95, 0.2));
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("partition key not found") != std::string::npos);
  CHECK(r.mode == TerminalMode::Exact);
  CHECK(r.rows_scanned == 0);
  CHECK(r.prediction.value == 0.0 + 0.5 * 4.0);
}

TEST_CASE("count without a predicate is free and exact", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, false);
  write_file(dir.file("model.json"), R"({
  "task": "regression",
  "kind": "linear",
  "arity": 2,
  "transforms": [],
  "body": {"weights": [1.0, 0.001], "bias": 0.0}
})");
  write_file(dir.file("pipeline.json"), R"({
  "name": "engine-fixture",
  "dataset": "manifest.json",
  "model": "model.json",
  "task": "regression",
  "features": [
    {"id": "f0", "table": "t", "op": "AVG", "column": "v",
     "partition_by": {"request_field": "g"}},
    {"id": "f1", "table": "t", "op": "COUNT",
     "partition_by": {"request_field": "g"}}
  ],
  "delta": 0.2
})");
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  RequestRecord req;
  req.id = 2;
  req.fields.emplace("g", FieldValue{std::int64_t{1}});

  const ServeReport r = serve_request(lp, req, config(0.9, 0.2));
  // Partition size is metadata: the exact baseline never scans for it, so
  // it contributes nothing to the exact row cost.
  CHECK(r.rows_exact == 400);
  CHECK(exact_serve(lp, req).rows_scanned == 400);
  REQUIRE(r.features.size() == 2);
  CHECK(r.features[1].value == 400.0);
  CHECK(r.features[1].exact);
}

TEST_CASE("debug mode records bootstrap divergence", "[engine]") {
  TempDir dir;
  write_regression_fixture(dir, false);
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  const RequestRecord req = request(17, 1, 0.0);

  RequestConfig cfg = config(0.9, 0.2);
  CHECK(serve_request(lp, req, cfg).max_bootstrap_divergence == 0.0);

  cfg.debug_bootstrap = true;
  const ServeReport r = serve_request(lp, req, cfg);
  CHECK(r.max_bootstrap_divergence > 0.0);
  // The closed form and the bootstrap should roughly agree on this smooth
  // population; a large gap would flag a broken estimator.
  CHECK(r.max_bootstrap_divergence < 0.5);
}

TEST_CASE("request configuration domains are enforced", "[engine]") {
  RequestConfig cfg;

  SECTION("alpha") {
    cfg.alpha = 0.0;
    CHECK_THROWS_WITH(cfg.check(Task::Regression),
                      Catch::Matchers::ContainsSubstring("alpha"));
  }
  SECTION("gamma") {
    cfg.gamma = 1.5;
    CHECK_THROWS_WITH(cfg.check(Task::Regression),
                      Catch::Matchers::ContainsSubstring("gamma"));
  }
  SECTION("tau") {
    cfg.tau = 0.0;
    CHECK_THROWS_WITH(cfg.check(Task::Regression),
                      Catch::Matchers::ContainsSubstring("tau"));
  }
  SECTION("qmc sample floor") {
    cfg.qmc_m = 32;
    CHECK_THROWS_WITH(cfg.check(Task::Regression),
                      Catch::Matchers::ContainsSubstring("at least 64"));
  }
  SECTION("bootstrap floor") {
    cfg.bootstrap_b = 5;
    CHECK_THROWS_WITH(cfg.check(Task::Regression),
                      Catch::Matchers::ContainsSubstring("at least 10"));
  }
  SECTION("classification needs delta = 0") {
    cfg.delta = 0.1;
    CHECK_NOTHROW(cfg.check(Task::Regression));
    CHECK_THROWS_WITH(cfg.check(Task::Classification),
                      Catch::Matchers::ContainsSubstring("delta = 0"));
  }
}

TEST_CASE("classification requests serve and fall back exactly", "[engine]") {
  TempDir dir;
  std::ostringstream csv;
  csv << "g,v\n";
  for (int i = 0; i < 300; ++i) {
    csv << "1," << (0.4 + 1.5 * std::sin(1.3 * i)) << "\n";
  }
  write_file(dir.file("t.csv"), csv.str());
  write_file(dir.file("manifest.json"), R"({
  "tables": [
    {"name": "t", "file": "t.csv", "partition_key": "g",
     "columns": [{"name": "g", "type": "int64"},
                 {"name": "v", "type": "float64"}]}
  ]
})");
  write_file(dir.file("model.json"), R"({
  "task": "classification",
  "kind": "linear",
  "arity": 1,
  "transforms": [],
  "body": {"weights": [[-1.0], [1.0]], "bias": [0.2, 0.0]}
})");
  write_file(dir.file("pipeline.json"), R"({
  "name": "cls-fixture",
  "dataset": "manifest.json",
  "model": "model.json",
  "task": "classification",
  "features": [
    {"id": "f0", "table": "t", "op": "AVG", "column": "v",
     "partition_by": {"request_field": "g"}}
  ],
  "delta": 0
})");
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  RequestRecord req;
  req.id = 4;
  req.fields.emplace("g", FieldValue{std::int64_t{1}});

  const ServeReport r = serve_request(lp, req, config(0.9, 0.0));
  CHECK(r.prediction.task == Task::Classification);
  CHECK(r.achieved >= 0.9);
  REQUIRE(r.prediction.scores.size() == 2);

  const ServeReport ex = exact_serve(lp, req);
  const ServeReport full = serve_request(lp, req, config(1.0, 0.0));
  CHECK(full.mode == TerminalMode::Exact);
  CHECK(full.prediction.class_index == ex.prediction.class_index);
  CHECK(full.rows_scanned == 300);
}
