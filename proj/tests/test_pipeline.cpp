#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "apx/pipeline.hpp"

#include "test_util.hpp"

using namespace apx;
using testutil::TempDir;
using testutil::write_file;

namespace {

// A complete runnable pipeline directory: a two-key table, a linear model
// over one aggregation feature plus one pass-through field, and requests.
void write_fixture(const TempDir& dir, const std::string& delta_json) {
  write_file(dir.file("t.csv"),
             "g,v\n"
             "1,1.0\n"
             "1,2.0\n"
             "1,3.0\n"
             "2,10.0\n"
             "2,14.0\n");
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
  "body": {"weights": [1.0, 1.0], "bias": 0.0}
})");
  write_file(dir.file("pipeline.json"), std::string(R"({
  "name": "tiny",
  "dataset": "manifest.json",
  "model": "model.json",
  "task": "regression",
  "features": [
    {"id": "f0", "table": "t", "op": "AVG", "column": "v",
     "partition_by": {"request_field": "g"}}
  ],
  "passthrough": ["p0"],
  "delta": )") + delta_json + "\n}\n");
}

}  // namespace

TEST_CASE("pipeline documents parse into full specs", "[pipeline]") {
  const nlohmann::json doc = nlohmann::json::parse(R"({
  "name": "parse-check",
  "dataset": "d.json",
  "model": "m.json",
  "task": "regression",
  "features": [
    {"id": "a", "table": "t", "op": "QUANTILE", "column": "v", "quantile": 0.9,
     "partition_by": {"request_field": "user"},
     "predicate": [
       {"column": "flag", "op": "==", "value": 1},
       {"column": "city", "op": "!=", "request_field": "home_city"}
     ]},
    {"id": "b", "table": "t", "op": "COUNT",
     "partition_by": {"request_field": "user"}}
  ],
  "passthrough": ["age"],
  "transforms": [{"type": "standard_scaler", "mean": [0, 0, 0], "scale": [1, 1, 1]}],
  "delta": 0.25
})");
  const PipelineSpec spec = parse_pipeline_spec(doc, "doc");

  CHECK(spec.name == "parse-check");
  CHECK(spec.task == Task::Regression);
  REQUIRE(spec.features.size() == 2);
  CHECK(spec.features[0].op == AggOp::Quantile);
  CHECK(spec.features[0].quantile == 0.9);
  CHECK(spec.features[0].partition_field == "user");
  REQUIRE(spec.features[0].predicate.size() == 2);
  CHECK(spec.features[0].predicate[0].column == "flag");
  CHECK(spec.features[0].predicate[0].literal.has_value());
  CHECK(spec.features[1].predicate.empty());
  CHECK(spec.features[0].predicate[1].request_field == "home_city");
  CHECK(spec.features[1].column.empty());
  CHECK(spec.passthrough == std::vector<std::string>{"age"});
  REQUIRE(spec.extra_transforms.size() == 1);
  CHECK(spec.delta.literal == 0.25);
  CHECK_FALSE(spec.delta.is_mae);
}

TEST_CASE("pipeline parsing names what is missing or malformed", "[pipeline]") {
  auto base = nlohmann::json::parse(R"({
  "dataset": "d.json", "model": "m.json", "task": "regression",
  "features": [{"id": "a", "table": "t", "op": "AVG", "column": "v",
                "partition_by": {"request_field": "g"}}]
})");

  SECTION("missing top-level field") {
    auto doc = base;
    doc.erase("task");
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("missing 'task'"));
  }

  SECTION("feature missing its operator") {
    auto doc = base;
    doc["features"][0].erase("op");
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("feature missing 'op'"));
  }

  SECTION("quantile level is required and bounded") {
    auto doc = base;
    doc["features"][0]["op"] = "QUANTILE";
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("'quantile'"));
    doc["features"][0]["quantile"] = 1.0;
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("in (0, 1)"));
  }

  SECTION("feature count cap") {
    auto doc = base;
    for (int i = 0; i < 33; ++i) {
      auto f = base["features"][0];
      f["id"] = "f" + std::to_string(i);
      doc["features"][static_cast<std::size_t>(i)] = f;
    }
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("at most 32"));
  }

  SECTION("delta must be a number or an mae object") {
    auto doc = base;
    doc["delta"] = -0.5;
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("non-negative"));
    doc["delta"] = nlohmann::json::object({{"wrong", "x"}});
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("mae"));
  }

  SECTION("comparison needs a right-hand side") {
    auto doc = base;
    doc["features"][0]["predicate"] = nlohmann::json::array(
        {nlohmann::json::object({{"column", "flag"}, {"op", "=="}})});
    CHECK_THROWS_WITH(parse_pipeline_spec(doc, "doc"),
                      Catch::Matchers::ContainsSubstring("'value' or 'request_field'"));
  }
}

TEST_CASE("loading a pipeline wires dataset, model, and delta", "[pipeline]") {
  TempDir dir;

  SECTION("literal delta passes straight through") {
    write_fixture(dir, "0.5");
    const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
    CHECK(lp.default_delta == 0.5);
    CHECK(lp.feature_count() == 2);
    CHECK(lp.model.arity == 2);
    CHECK(lp.dataset.table("t").row_count == 5);
  }

  SECTION("mae delta evaluates the model on the holdout") {
    // Model predicts f0 + p0; absolute errors are 0.5, 0.0, and 1.0, so the
    // resolved bound is exactly 0.5.
    write_fixture(dir, R"({"mae": "holdout.csv"})");
    write_file(dir.file("holdout.csv"),
               "f0,p0,label\n"
               "1.0,2.0,3.5\n"
               "2.0,2.0,4.0\n"
               "0.0,0.0,1.0\n");
    const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
    CHECK(lp.default_delta == 0.5);
  }

  SECTION("the label column may sit anywhere in the holdout") {
    write_fixture(dir, R"({"mae": "holdout.csv"})");
    write_file(dir.file("holdout.csv"),
               "label,f0,p0\n"
               "3.5,1.0,2.0\n"
               "4.0,2.0,2.0\n");
    const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
    CHECK(lp.default_delta == 0.25);
  }

  SECTION("holdout must carry a label and the right arity") {
    write_fixture(dir, R"({"mae": "holdout.csv"})");
    write_file(dir.file("holdout.csv"), "f0,p0,target\n1.0,2.0,3.0\n");
    CHECK_THROWS_WITH(load_pipeline(dir.file("pipeline.json")),
                      Catch::Matchers::ContainsSubstring("'label'"));
    write_file(dir.file("holdout.csv"), "f0,label\n1.0,2.0\n");
    CHECK_THROWS_WITH(load_pipeline(dir.file("pipeline.json")),
                      Catch::Matchers::ContainsSubstring("feature columns"));
  }
}

TEST_CASE("pipeline transforms fold in front of the model chain", "[pipeline]") {
  TempDir dir;
  write_fixture(dir, "0.1");
  // Rewrite the pipeline with a scaler that shifts both inputs by 1 and
  // halves them; the model itself stays untouched on disk.
  write_file(dir.file("pipeline.json"), R"({
  "name": "tiny",
  "dataset": "manifest.json",
  "model": "model.json",
  "task": "regression",
  "features": [
    {"id": "f0", "table": "t", "op": "AVG", "column": "v",
     "partition_by": {"request_field": "g"}}
  ],
  "passthrough": ["p0"],
  "transforms": [{"type": "standard_scaler", "mean": [1.0, 1.0], "scale": [2.0, 2.0]}],
  "delta": 0.1
})");
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));
  REQUIRE(lp.model.transforms.size() == 1);
  const PredictionValue p = predict(lp.model, {3.0, 5.0});
  CHECK(p.value == (3.0 - 1.0) / 2.0 + (5.0 - 1.0) / 2.0);
}

TEST_CASE("pipeline validation cross-checks every piece by name", "[pipeline]") {
  TempDir dir;
  write_fixture(dir, "0.5");
  auto doc = nlohmann::json::parse(testutil::read_file(dir.file("pipeline.json")));

  SECTION("unknown feature table") {
    doc["features"][0]["table"] = "nope";
    write_file(dir.file("pipeline.json"), doc.dump());
    CHECK_THROWS_WITH(load_pipeline(dir.file("pipeline.json")),
                      Catch::Matchers::ContainsSubstring("no table 'nope'"));
  }

  SECTION("unknown value column") {
    doc["features"][0]["column"] = "missing";
    write_file(dir.file("pipeline.json"), doc.dump());
    CHECK_THROWS_WITH(load_pipeline(dir.file("pipeline.json")),
                      Catch::Matchers::ContainsSubstring("no column 'missing'"));
  }

  SECTION("value operator without a column names the feature") {
    doc["features"][0].erase("column");
    write_file(dir.file("pipeline.json"), doc.dump());
    CHECK_THROWS_WITH(load_pipeline(dir.file("pipeline.json")),
                      Catch::Matchers::ContainsSubstring("f0"));
  }

  SECTION("task mismatch between pipeline and model") {
    doc["task"] = "classification";
    doc["delta"] = 0;
    write_file(dir.file("pipeline.json"), doc.dump());
    CHECK_THROWS_WITH(load_pipeline(dir.file("pipeline.json")),
                      Catch::Matchers::ContainsSubstring("task"));
  }

  SECTION("feature width must match the model arity") {
    doc["passthrough"] = nlohmann::json::array({"p0", "p1"});
    write_file(dir.file("pipeline.json"), doc.dump());
    CHECK_THROWS_WITH(load_pipeline(dir.file("pipeline.json")),
                      Catch::Matchers::ContainsSubstring("model chain expects 2"));
  }
}

TEST_CASE("request records load from CSV and JSON", "[pipeline]") {
  TempDir dir;

  SECTION("typed cells and an explicit id column") {
    write_file(dir.file("r.csv"),
               "id,g,p0,city\n"
               "7,1,2.5,sf\n"
               "9,2,0.25,nyc\n");
    const auto reqs = load_requests_csv(dir.file("r.csv"));
    REQUIRE(reqs.size() == 2);
    CHECK(reqs[0].id == 7);
    CHECK(reqs[1].id == 9);
    CHECK(std::get<std::int64_t>(reqs[0].field("g")) == 1);
    CHECK(std::get<double>(reqs[0].field("p0")) == 2.5);
    CHECK(std::get<std::string>(reqs[1].field("city")) == "nyc");
  }

  SECTION("row index ids when no id column exists") {
    write_file(dir.file("r.csv"), "g\n5\n6\n");
    const auto reqs = load_requests_csv(dir.file("r.csv"));
    CHECK(reqs[0].id == 0);
    CHECK(reqs[1].id == 1);
  }

  SECTION("non-integer id is rejected with its line") {
    write_file(dir.file("r.csv"), "id,g\nx7,1\n");
    CHECK_THROWS_WITH(load_requests_csv(dir.file("r.csv")),
                      Catch::Matchers::ContainsSubstring(":2"));
  }

  SECTION("JSON requests mirror the CSV typing") {
    const RequestRecord r = request_from_json(
        nlohmann::json::parse(R"({"id": 4, "g": 1, "p0": 2.5, "city": "sf"})"),
        "line 1");
    CHECK(r.id == 4);
    CHECK(std::get<std::int64_t>(r.field("g")) == 1);
    CHECK(std::get<double>(r.field("p0")) == 2.5);
    CHECK(std::get<std::string>(r.field("city")) == "sf");
    CHECK_THROWS_WITH(request_from_json(nlohmann::json::parse("[1]"), "line 2"),
                      Catch::Matchers::ContainsSubstring("line 2"));
  }
}

TEST_CASE("request validation names the field and the request", "[pipeline]") {
  TempDir dir;
  write_fixture(dir, "0.5");
  const LoadedPipeline lp = load_pipeline(dir.file("pipeline.json"));

  RequestRecord good;
  good.id = 1;
  good.fields.emplace("g", FieldValue{std::int64_t{1}});
  good.fields.emplace("p0", FieldValue{2.0});
  CHECK_NOTHROW(validate_requests(lp, {good}));

  SECTION("missing partition field") {
    RequestRecord bad = good;
    bad.id = 42;
    bad.fields.erase("g");
    CHECK_THROWS_WITH(validate_requests(lp, {good, bad}),
                      Catch::Matchers::ContainsSubstring("request id 42") &&
                          Catch::Matchers::ContainsSubstring("'g'"));
  }

  SECTION("missing pass-through field") {
    RequestRecord bad = good;
    bad.fields.erase("p0");
    CHECK_THROWS_WITH(validate_requests(lp, {bad}),
                      Catch::Matchers::ContainsSubstring("pass-through"));
  }

  SECTION("pass-through fields must be numeric") {
    RequestRecord bad = good;
    bad.fields["p0"] = FieldValue{std::string("oops")};
    CHECK_THROWS_WITH(validate_requests(lp, {bad}),
                      Catch::Matchers::ContainsSubstring("not numeric"));
  }
}
