#pragma once

// Pipeline declaration: aggregation features over a dataset, pass-through
// request fields, a model artifact, and the error-bound policy. Loading a
// pipeline pulls in the dataset and model and cross-validates the wiring
// before any request runs.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apx/aggregate.hpp"
#include "apx/columnar.hpp"
#include "apx/common.hpp"
#include "apx/model.hpp"

namespace apx {

// Most approximated features a pipeline may declare; keeps the Saltelli
// sample space within the Sobol generator's 64 supported dimensions.
inline constexpr std::size_t kMaxAggregationFeatures = 32;

struct DeltaPolicy {
  // Either a literal bound or "MAE of the model on a holdout CSV".
  bool is_mae = false;
  double literal = 0.0;
  std::string holdout_csv;
};

struct PipelineSpec {
  std::string name;
  std::string dataset_manifest;
  std::string model_path;
  Task task = Task::Regression;
  std::vector<AggregationSpec> features;
  std::vector<std::string> passthrough;
  std::vector<Transform> extra_transforms;  // applied before the model's own chain
  DeltaPolicy delta;
};

struct LoadedPipeline {
  PipelineSpec spec;
  Dataset dataset;
  ModelArtifact model;
  double default_delta = 0.0;

  std::size_t feature_count() const {
    return spec.features.size() + spec.passthrough.size();
  }
};

namespace detail {

inline FieldValue field_value_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number_integer()) return FieldValue{j.get<std::int64_t>()};
  if (j.is_number()) return FieldValue{j.get<double>()};
  if (j.is_string()) return FieldValue{j.get<std::string>()};
  fail(where + ": field values must be numbers or strings");
}

inline std::vector<Comparison> parse_predicate(const nlohmann::json& j,
                                               const std::string& where) {
  std::vector<Comparison> out;
  require(j.is_array(), where + ": predicate must be an array of comparisons");
  for (const auto& cj : j) {
    Comparison c;
    require(cj.contains("column") && cj.contains("op"),
            where + ": comparison needs 'column' and 'op'");
    c.column = cj["column"].get<std::string>();
    c.op = cmp_op_from_string(cj["op"].get<std::string>());
    if (cj.contains("request_field")) {
      c.request_field = cj["request_field"].get<std::string>();
    } else {
      require(cj.contains("value"), where + ": comparison needs 'value' or 'request_field'");
      c.literal = field_value_from_json(cj["value"], where);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

inline PipelineSpec parse_pipeline_spec(const nlohmann::json& doc,
                                        const std::string& where) {
  PipelineSpec spec;
  for (const char* field : {"dataset", "model", "task", "features"}) {
    require(doc.contains(field), where + ": pipeline missing '" + field + "'");
  }
  spec.name = doc.contains("name") ? doc["name"].get<std::string>() : "pipeline";
  spec.dataset_manifest = doc["dataset"].get<std::string>();
  spec.model_path = doc["model"].get<std::string>();
  spec.task = task_from_string(doc["task"].get<std::string>());

  require(doc["features"].is_array() && !doc["features"].empty(),
          where + ": 'features' must be a non-empty array");
  for (const auto& fj : doc["features"]) {
    AggregationSpec f;
    for (const char* field : {"id", "table", "op", "partition_by"}) {
      require(fj.contains(field), where + ": feature missing '" + field + "'");
    }
    f.id = fj["id"].get<std::string>();
    f.table = fj["table"].get<std::string>();
    f.op = agg_op_from_string(fj["op"].get<std::string>());
    if (fj.contains("column")) f.column = fj["column"].get<std::string>();
    if (fj.contains("quantile")) {
      f.quantile = fj["quantile"].get<double>();
      require(f.quantile > 0.0 && f.quantile < 1.0,
              where + ": feature '" + f.id + "': quantile must lie in (0, 1)");
    } else {
      require(f.op != AggOp::Quantile,
              where + ": feature '" + f.id + "': QUANTILE needs a 'quantile' level");
    }
    const auto& pb = fj["partition_by"];
    require(pb.is_object() && pb.contains("request_field"),
            where + ": feature '" + f.id + "': partition_by needs 'request_field'");
    f.partition_field = pb["request_field"].get<std::string>();
    if (fj.contains("predicate")) {
      f.predicate = detail::parse_predicate(fj["predicate"], where + ": feature '" + f.id + "'");
    }
    spec.features.push_back(std::move(f));
  }
  require(spec.features.size() <= kMaxAggregationFeatures,
          where + ": at most " + std::to_string(kMaxAggregationFeatures) +
              " aggregation features are supported");

  if (doc.contains("passthrough")) {
    for (const auto& p : doc["passthrough"]) {
      spec.passthrough.push_back(p.get<std::string>());
    }
  }
  if (doc.contains("transforms")) {
    for (const auto& tj : doc["transforms"]) {
      spec.extra_transforms.push_back(transform_from_json(tj));
    }
  }
  if (doc.contains("delta")) {
    const auto& dj = doc["delta"];
    if (dj.is_number()) {
      spec.delta.literal = dj.get<double>();
      require(spec.delta.literal >= 0.0, where + ": delta must be non-negative");
    } else {
      require(dj.is_object() && dj.contains("mae"),
              where + ": delta must be a number or {\"mae\": <holdout csv>}");
      spec.delta.is_mae = true;
      spec.delta.holdout_csv = dj["mae"].get<std::string>();
    }
  }
  return spec;
}

// Cross-checks features against the dataset and the model shape. Every
// problem is reported with the feature id it belongs to.
inline void validate_pipeline(const PipelineSpec& spec, const Dataset& ds,
                              const ModelArtifact& model) {
  require(spec.task == model.task,
          "pipeline task '" + std::string(task_name(spec.task)) +
              "' does not match model task '" + std::string(task_name(model.task)) + "'");
  const std::size_t width = spec.features.size() + spec.passthrough.size();
  std::size_t model_in = model.arity;
  for (auto it = spec.extra_transforms.rbegin(); it != spec.extra_transforms.rend(); ++it) {
    // Extra transforms sit in front of the model chain; walk widths backward.
    require(it->output_width() == model_in,
            "pipeline transform output width " + std::to_string(it->output_width()) +
                " does not match downstream width " + std::to_string(model_in));
    model_in = it->input_width();
  }
  require(width == model_in,
          "pipeline provides " + std::to_string(width) +
              " features but the model chain expects " + std::to_string(model_in));

  for (const AggregationSpec& f : spec.features) {
    const Table& table = ds.table(f.table);
    require(!table.partition_key.empty(),
            "feature '" + f.id + "': table '" + f.table + "' has no partition key");
    if (f.column.empty()) {
      require(f.op == AggOp::Count, "feature '" + f.id + "': operator " +
                                        agg_op_name(f.op) + " needs a value column");
    } else {
      const Column& col = table.column(f.column);
      require(!col.is_string(),
              "feature '" + f.id + "': value column '" + f.column + "' is not numeric");
    }
    for (const Comparison& c : f.predicate) {
      table.column(c.column);  // existence check; throws with table context
    }
  }
}

// Loads pipeline JSON, its dataset, and its model; resolves the delta
// policy (a holdout-MAE policy evaluates the model on the holdout here).
inline LoadedPipeline load_pipeline(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open pipeline file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    fail(path + ": invalid JSON: " + e.what());
  }

  LoadedPipeline lp;
  lp.spec = parse_pipeline_spec(doc, path);
  const auto base = std::filesystem::path(path).parent_path();
  lp.dataset = load_dataset((base / lp.spec.dataset_manifest).string());
  lp.model = load_model((base / lp.spec.model_path).string());
  validate_pipeline(lp.spec, lp.dataset, lp.model);

  // Pipeline-level transforms run before the model's own chain; fold them
  // into the artifact so evaluation has a single input contract.
  if (!lp.spec.extra_transforms.empty()) {
    lp.model.transforms.insert(lp.model.transforms.begin(),
                               lp.spec.extra_transforms.begin(),
                               lp.spec.extra_transforms.end());
    lp.model.arity = lp.spec.extra_transforms.front().input_width();
    validate_model(lp.model);
  }

  if (lp.spec.task == Task::Classification) {
    require(!lp.spec.delta.is_mae && lp.spec.delta.literal == 0.0,
            path + ": classification pipelines require delta = 0");
    lp.default_delta = 0.0;
  } else if (lp.spec.delta.is_mae) {
    const auto holdout = (base / lp.spec.delta.holdout_csv).string();
    CsvTable csv = read_csv(holdout);
    require(!csv.rows.empty(), holdout + ": holdout CSV has no rows");
    const auto label_it = std::find(csv.header.begin(), csv.header.end(), "label");
    require(label_it != csv.header.end(), holdout + ": holdout CSV needs a 'label' column");
    const std::size_t label_pos = static_cast<std::size_t>(label_it - csv.header.begin());
    require(csv.header.size() == lp.model.arity + 1,
            holdout + ": holdout CSV needs " + std::to_string(lp.model.arity) +
                " feature columns plus 'label'");
    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      std::vector<double> x;
      x.reserve(lp.model.arity);
      for (std::size_t c = 0; c < csv.header.size(); ++c) {
        const std::string where = holdout + ":" + std::to_string(r + 2);
        if (c == label_pos) {
          labels.push_back(parse_f64(csv.rows[r][c], where));
        } else {
          x.push_back(parse_f64(csv.rows[r][c], where));
        }
      }
      rows.push_back(std::move(x));
    }
    const auto preds = predict_batch(lp.model, rows);
    double mae = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      mae += std::abs(preds[i].value - labels[i]);
    }
    lp.default_delta = mae / static_cast<double>(preds.size());
  } else {
    lp.default_delta = lp.spec.delta.literal;
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Request records
// ---------------------------------------------------------------------------

inline FieldValue parse_request_cell(const std::string& cell) {
  if (!cell.empty()) {
    {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec == std::errc() && p == cell.data() + cell.size()) return FieldValue{v};
    }
    {
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec == std::errc() && p == cell.data() + cell.size()) return FieldValue{v};
    }
  }
  return FieldValue{cell};
}

// Request CSV: header names become field names. An 'id' column is used as
// the request id when present; otherwise ids are the 0-based row index.
inline std::vector<RequestRecord> load_requests_csv(const std::string& path) {
  CsvTable csv = read_csv(path);
  std::vector<RequestRecord> out;
  out.reserve(csv.rows.size());
  const auto id_it = std::find(csv.header.begin(), csv.header.end(), "id");
  const std::size_t id_pos = id_it == csv.header.end()
                                 ? csv.header.size()
                                 : static_cast<std::size_t>(id_it - csv.header.begin());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    RequestRecord req;
    req.id = static_cast<std::int64_t>(r);
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
      FieldValue v = parse_request_cell(csv.rows[r][c]);
      if (c == id_pos) {
        require(std::holds_alternative<std::int64_t>(v),
                path + ":" + std::to_string(r + 2) + ": 'id' must be an integer");
        req.id = std::get<std::int64_t>(v);
      }
      req.fields.emplace(csv.header[c], std::move(v));
    }
    out.push_back(std::move(req));
  }
  return out;
}

inline RequestRecord request_from_json(const nlohmann::json& j, const std::string& where) {
  require(j.is_object(), where + ": request must be a JSON object");
  RequestRecord req;
  for (auto it = j.begin(); it != j.end(); ++it) {
    FieldValue v = detail::field_value_from_json(it.value(), where + ": field '" + it.key() + "'");
    if (it.key() == "id") {
      require(std::holds_alternative<std::int64_t>(v), where + ": 'id' must be an integer");
      req.id = std::get<std::int64_t>(v);
    }
    req.fields.emplace(it.key(), std::move(v));
  }
  return req;
}

// Pre-run check that every field the pipeline reads is present (and typed
// sensibly) on every request; failures name the field and request id.
inline void validate_requests(const LoadedPipeline& lp,
                              const std::vector<RequestRecord>& requests) {
  for (const RequestRecord& req : requests) {
    const std::string where = "request id " + std::to_string(req.id);
    for (const AggregationSpec& f : lp.spec.features) {
      require(req.fields.count(f.partition_field) > 0,
              where + ": missing partition field '" + f.partition_field + "'");
      for (const Comparison& c : f.predicate) {
        if (!c.literal.has_value()) {
          require(req.fields.count(c.request_field) > 0,
                  where + ": missing predicate field '" + c.request_field + "'");
        }
      }
    }
    for (const std::string& p : lp.spec.passthrough) {
      require(req.fields.count(p) > 0, where + ": missing pass-through field '" + p + "'");
      field_as_double(req.field(p), p);  // must be numeric
    }
  }
}

}  // namespace apx
