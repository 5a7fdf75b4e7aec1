#pragma once

// Synthetic workload generation. Emits a self-contained serving workload
// into a directory: partitioned feature tables (CSV), a dataset manifest,
// a model whose response surface is built over the exact aggregate values,
// a pipeline spec wiring the two together, a request log, and for
// regression a labeled holdout used by the MAE delta policy.
//
// The generator is deterministic for a fixed spec: every random stream is
// keyed off (seed, purpose, index), so regenerating with the same seed
// reproduces every output file byte for byte.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "apx/aggregate.hpp"
#include "apx/columnar.hpp"
#include "apx/common.hpp"
#include "apx/model.hpp"
#include "apx/qmc.hpp"

namespace apx {

struct SynthSpec {
  std::string name = "synthetic";
  Task task = Task::Regression;
  std::size_t features = 3;
  std::size_t rows_per_feature = 100000;
  std::size_t keys = 50;          // partitions per table; requests draw keys uniformly
  std::size_t requests = 500;
  std::string model = "gbdt";     // linear | gbdt | rf | mlp
  double resilience = 0.8;        // 0 = constant response, 1 = calm, strong signal
  double noise = 0.2;             // regression label noise (standard deviation)
  std::size_t classes = 3;        // classification only
  std::size_t passthrough = 1;    // exact request-supplied model inputs
  std::vector<AggOp> ops;         // cycled across features; default AVG,SUM,AVG,...
  std::size_t train_rows = 256;   // least-squares sample for the linear kind
  std::size_t holdout_rows = 200; // labeled rows backing the MAE delta policy
  std::uint64_t seed = 1;
};

struct SynthResult {
  std::string out_dir;
  std::string pipeline_path;
  std::string summary_path;
  std::map<std::string, std::size_t> declared_rows;
  // The response surface in standardized feature space: one row per model
  // output. For tree kinds the row holds the per-feature staircase slopes.
  std::vector<std::vector<double>> generating_weights;
  std::vector<double> generating_bias;
};

namespace detail {

inline double normal_draw(SplitMix& rng) {
  double u = rng.uniform();
  while (u <= 0.0) u = rng.uniform();
  return inverse_normal_cdf(u);
}

inline void append_number(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  require(ec == std::errc(), "number formatting failed");
  out.append(buf, p);
}

inline void append_number(std::string& out, std::int64_t v) {
  char buf[24];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  require(ec == std::errc(), "number formatting failed");
  out.append(buf, p);
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open for writing: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  require(out.good(), "write failed: " + path);
}

inline void write_json_file(const std::string& path, const nlohmann::ordered_json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace detail

// Ordinary least squares with an intercept, solved through the normal
// equations (the design widths here are tiny). Returns the coefficient for
// each input column followed by the intercept.
inline std::vector<double> least_squares_fit(const std::vector<std::vector<double>>& x,
                                             const std::vector<double>& y) {
  require(!x.empty() && x.size() == y.size(), "least squares: empty or ragged sample");
  const std::size_t w = x.front().size() + 1;
  require(x.size() >= w, "least squares: fewer rows than coefficients");
  std::vector<double> g(w * w, 0.0);  // X'X, row-major
  std::vector<double> r(w, 0.0);      // X'y
  std::vector<double> xi(w, 1.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    require(x[n].size() + 1 == w, "least squares: empty or ragged sample");
    std::copy(x[n].begin(), x[n].end(), xi.begin());
    xi[w - 1] = 1.0;
    for (std::size_t i = 0; i < w; ++i) {
      r[i] += xi[i] * y[n];
      for (std::size_t j = 0; j < w; ++j) g[i * w + j] += xi[i] * xi[j];
    }
  }
  // Gaussian elimination with partial pivoting on [G | r].
  for (std::size_t col = 0; col < w; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < w; ++row) {
      if (std::abs(g[row * w + col]) > std::abs(g[pivot * w + col])) pivot = row;
    }
    require(std::abs(g[pivot * w + col]) > 1e-12, "least squares: singular design");
    if (pivot != col) {
      for (std::size_t j = 0; j < w; ++j) std::swap(g[pivot * w + j], g[col * w + j]);
      std::swap(r[pivot], r[col]);
    }
    for (std::size_t row = 0; row < w; ++row) {
      if (row == col) continue;
      const double f = g[row * w + col] / g[col * w + col];
      if (f == 0.0) continue;
      for (std::size_t j = col; j < w; ++j) g[row * w + j] -= f * g[col * w + j];
      r[row] -= f * r[col];
    }
  }
  std::vector<double> beta(w);
  for (std::size_t i = 0; i < w; ++i) beta[i] = r[i] / g[i * w + i];
  return beta;
}

namespace detail {

// Operators whose estimates converge slower than a mean get a gentler slope
// so no single feature forces a near-exhaustive scan.
inline double op_slope_scale(AggOp op) {
  if (op == AggOp::Count) return 0.35;
  if (op == AggOp::Var || op == AggOp::Std) return 0.5;
  return 1.0;
}

// One stump per threshold: x[feature] < t routes to the -h/2 leaf, else
// +h/2. Summed over evenly spaced thresholds this approximates a centered
// linear ramp of total rise slope*(hi-lo).
inline void add_staircase(std::vector<Tree>& trees, std::size_t feature, double lo,
                          double hi, double slope, std::size_t steps) {
  const double width = hi - lo;
  const double h = slope * width / static_cast<double>(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0].feature = static_cast<std::int32_t>(feature);
    t.nodes[0].threshold = lo + (static_cast<double>(i) + 0.5) * width / static_cast<double>(steps);
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[1].leaf_offset = 0;
    t.nodes[2].leaf_offset = 1;
    t.leaf_values = {-0.5 * h, 0.5 * h};
    trees.push_back(std::move(t));
  }
}

}  // namespace detail

inline SynthResult generate_workload(const SynthSpec& spec, const std::string& out_dir) {
  require(spec.features >= 1 && spec.features <= kMaxAggregationFeatures,
          "synth: feature count must lie in [1, " +
              std::to_string(kMaxAggregationFeatures) + "]");
  require(spec.keys >= 1, "synth: need at least one partition key");
  require(spec.rows_per_feature >= spec.keys,
          "synth: rows per feature must cover every partition key");
  require(spec.requests >= 1, "synth: need at least one request");
  require(spec.resilience >= 0.0 && spec.resilience <= 1.0,
          "synth: resilience must lie in [0, 1]");
  require(spec.noise >= 0.0, "synth: noise must be non-negative");
  const bool classify = spec.task == Task::Classification;
  require(!classify || spec.classes >= 2, "synth: classification needs >= 2 classes");
  const ModelKind kind = model_kind_from_string(
      spec.model == "gbdt" || spec.model == "rf" ? "tree_ensemble" : spec.model);
  require(!classify || kind != ModelKind::TreeEnsemble,
          "synth: tree ensembles are generated for regression tasks only");

  const std::size_t k = spec.features;
  const std::size_t width = k + spec.passthrough;
  const std::size_t outs = classify ? spec.classes : 1;
  std::vector<AggOp> ops = spec.ops;
  if (ops.empty()) ops = {AggOp::Avg, AggOp::Sum, AggOp::Avg};

  std::filesystem::create_directories(out_dir);
  const auto base = std::filesystem::path(out_dir);

  // Resilience sets how quiet rows are relative to the across-key spread of
  // the per-key means: resilient workloads resolve their aggregates from
  // small samples, brittle ones need deep scans.
  const double row_sd = std::max(0.05, 1.05 - spec.resilience);

  SynthResult result;
  result.out_dir = out_dir;

  // Per-feature tables: one partition per key, keys written in ascending
  // order so the loader's grouping preserves row order.
  nlohmann::ordered_json manifest_tables = nlohmann::ordered_json::array();
  std::vector<AggregationSpec> fspecs(k);
  for (std::size_t j = 0; j < k; ++j) {
    const AggOp op = ops[j % ops.size()];
    const bool counts = op == AggOp::Count;
    AggregationSpec& fs = fspecs[j];
    fs.id = "f" + std::to_string(j);
    fs.table = "t" + std::to_string(j);
    fs.column = counts ? "" : "v";
    fs.op = op;
    if (op == AggOp::Quantile) fs.quantile = 0.9;
    fs.partition_field = "g";
    if (counts) {
      Comparison c;
      c.column = "flag";
      c.op = CmpOp::Eq;
      c.literal = FieldValue{std::int64_t{1}};
      fs.predicate.push_back(std::move(c));
    }

    SplitMix key_rng(mix64(spec.seed, 0xA1, j));
    std::string csv = counts ? "g,flag\n" : "g,v\n";
    csv.reserve(spec.rows_per_feature * 16);
    const std::size_t rows_base = spec.rows_per_feature / spec.keys;
    const std::size_t rows_rem = spec.rows_per_feature % spec.keys;
    for (std::size_t key = 0; key < spec.keys; ++key) {
      const double mu = detail::normal_draw(key_rng);
      const double p_true = 0.3 + 0.4 * key_rng.uniform();
      // Heterogeneous row noise keeps VAR/STD aggregates spread across keys.
      const double key_sd = row_sd * (0.6 + 0.8 * key_rng.uniform());
      const std::size_t rows = rows_base + (key < rows_rem ? 1 : 0);
      SplitMix row_rng(mix64(spec.seed, 0xB000 + j, key));
      for (std::size_t i = 0; i < rows; ++i) {
        detail::append_number(csv, static_cast<std::int64_t>(key));
        csv.push_back(',');
        if (counts) {
          detail::append_number(csv,
                                static_cast<std::int64_t>(row_rng.uniform() < p_true));
        } else {
          detail::append_number(csv, mu + key_sd * detail::normal_draw(row_rng));
        }
        csv.push_back('\n');
      }
    }
    const std::string file = fs.table + ".csv";
    detail::write_text_file((base / file).string(), csv);
    result.declared_rows[fs.table] = spec.rows_per_feature;

    nlohmann::ordered_json cols = nlohmann::ordered_json::array();
    cols.push_back({{"name", "g"}, {"type", "int64"}});
    cols.push_back(counts ? nlohmann::ordered_json{{"name", "flag"}, {"type", "int64"}}
                          : nlohmann::ordered_json{{"name", "v"}, {"type", "float64"}});
    manifest_tables.push_back({{"name", fs.table},
                               {"file", file},
                               {"partition_key", "g"},
                               {"columns", cols}});
  }

  const std::string manifest_path = (base / "manifest.json").string();
  detail::write_json_file(manifest_path, {{"tables", manifest_tables}});

  // Exact aggregate value per (feature, key), computed by the same scan the
  // exact serving path uses after a round trip through the CSV files.
  const Dataset ds = load_dataset(manifest_path);
  std::vector<std::vector<double>> exact(k, std::vector<double>(spec.keys, 0.0));
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t key = 0; key < spec.keys; ++key) {
      RequestRecord req;
      req.id = static_cast<std::int64_t>(key);
      req.fields.emplace("g", FieldValue{static_cast<std::int64_t>(key)});
      exact[j][key] = exact_aggregate(ds, fspecs[j], req);
    }
  }

  // Standardize over the key population; passthrough slots are generated
  // standard-normal already.
  Transform scaler;
  scaler.kind = TransformKind::StandardScaler;
  scaler.mean.assign(width, 0.0);
  scaler.scale.assign(width, 1.0);
  for (std::size_t j = 0; j < k; ++j) {
    MomentAccumulator m;
    for (double v : exact[j]) m.add(v);
    scaler.mean[j] = m.mean;
    const double sd = spec.keys > 1 ? std::sqrt(m.sample_variance()) : 0.0;
    scaler.scale[j] = sd > 1e-9 ? sd : 1.0;
  }

  // Response surface in standardized space. Resilience scales the weights,
  // so 0 collapses the model to a constant.
  SplitMix w_rng(mix64(spec.seed, 0xC1, 0));
  std::vector<std::vector<double>> w(outs, std::vector<double>(width, 0.0));
  std::vector<double> bias(outs, 0.0);
  for (std::size_t o = 0; o < outs; ++o) {
    for (std::size_t i = 0; i < width; ++i) {
      const double sign = w_rng.uniform() < 0.5 ? -1.0 : 1.0;
      double scale = spec.resilience * (0.5 + w_rng.uniform());
      if (i < k) scale *= detail::op_slope_scale(fspecs[i].op);
      w[o][i] = sign * scale;
    }
    bias[o] = 0.25 * spec.resilience * detail::normal_draw(w_rng);
  }
  result.generating_weights = w;
  result.generating_bias = bias;

  ModelArtifact model;
  model.task = spec.task;
  model.kind = kind;
  model.arity = width;
  model.body_width = width;
  model.out_width = outs;
  model.transforms.push_back(scaler);
  switch (kind) {
    case ModelKind::Linear: {
      if (classify) {
        model.linear.out_width = outs;
        model.linear.bias = bias;
        for (const auto& row : w) {
          model.linear.weights.insert(model.linear.weights.end(), row.begin(), row.end());
        }
        break;
      }
      // Fit the served model by least squares on simulated exact features;
      // with zero noise this recovers the generating weights.
      SplitMix t_rng(mix64(spec.seed, 0xD1, 0));
      const std::size_t train = std::max(spec.train_rows, 4 * (width + 1));
      std::vector<std::vector<double>> xs(train, std::vector<double>(width, 0.0));
      std::vector<double> ys(train, 0.0);
      for (std::size_t n = 0; n < train; ++n) {
        const std::size_t key = t_rng.below(spec.keys);
        for (std::size_t i = 0; i < width; ++i) {
          xs[n][i] = i < k ? (exact[i][key] - scaler.mean[i]) / scaler.scale[i]
                           : detail::normal_draw(t_rng);
        }
        double y = bias[0];
        for (std::size_t i = 0; i < width; ++i) y += w[0][i] * xs[n][i];
        ys[n] = y + spec.noise * detail::normal_draw(t_rng);
      }
      const std::vector<double> beta = least_squares_fit(xs, ys);
      model.linear.out_width = 1;
      model.linear.weights.assign(beta.begin(), beta.end() - 1);
      model.linear.bias = {beta.back()};
      break;
    }
    case ModelKind::TreeEnsemble: {
      const std::size_t steps =
          std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(
                                       6.0 + 50.0 * spec.resilience)));
      for (std::size_t i = 0; i < width; ++i) {
        double lo = -2.5;
        double hi = 2.5;
        if (i < k) {
          const auto [mn, mx] = std::minmax_element(exact[i].begin(), exact[i].end());
          lo = (*mn - scaler.mean[i]) / scaler.scale[i];
          hi = (*mx - scaler.mean[i]) / scaler.scale[i];
        }
        const double pad = 0.05 * (hi - lo) + 1e-9;
        detail::add_staircase(model.ensemble.trees, i, lo - pad, hi + pad, w[0][i], steps);
      }
      model.ensemble.combine = spec.model == "rf" ? TreeCombine::Average : TreeCombine::Sum;
      if (model.ensemble.combine == TreeCombine::Average) {
        // Averaging divides by the tree count; scale the leaves back up so
        // both combine modes realize the same staircase response.
        const double t = static_cast<double>(model.ensemble.trees.size());
        for (Tree& tree : model.ensemble.trees) {
          for (double& leaf : tree.leaf_values) leaf *= t;
        }
      }
      model.ensemble.base_score = bias[0];
      break;
    }
    case ModelKind::Mlp: {
      // h = [relu(x_i), relu(-x_i)] reproduces each input exactly as the
      // difference of the pair, so the network realizes w.x + b.
      MlpLayer hidden;
      hidden.in_width = width;
      hidden.out_width = 2 * width;
      hidden.activation = Activation::Relu;
      hidden.weights.assign(2 * width * width, 0.0);
      hidden.bias.assign(2 * width, 0.0);
      for (std::size_t i = 0; i < width; ++i) {
        hidden.weights[(2 * i) * width + i] = 1.0;
        hidden.weights[(2 * i + 1) * width + i] = -1.0;
      }
      MlpLayer out;
      out.in_width = 2 * width;
      out.out_width = outs;
      out.activation = classify ? Activation::Softmax : Activation::Identity;
      out.weights.assign(outs * 2 * width, 0.0);
      out.bias = bias;
      for (std::size_t o = 0; o < outs; ++o) {
        for (std::size_t i = 0; i < width; ++i) {
          out.weights[o * 2 * width + 2 * i] = w[o][i];
          out.weights[o * 2 * width + 2 * i + 1] = -w[o][i];
        }
      }
      model.mlp.layers = {std::move(hidden), std::move(out)};
      break;
    }
  }
  validate_model(model);
  save_model(model, (base / "model.json").string());

  // Request log: a uniformly drawn key plus standard-normal passthrough.
  SplitMix r_rng(mix64(spec.seed, 0xE1, 0));
  std::string requests_csv = "id,g";
  for (std::size_t p = 0; p < spec.passthrough; ++p) {
    requests_csv += ",p" + std::to_string(p);
  }
  requests_csv.push_back('\n');
  for (std::size_t n = 1; n <= spec.requests; ++n) {
    detail::append_number(requests_csv, static_cast<std::int64_t>(n));
    requests_csv.push_back(',');
    detail::append_number(requests_csv, static_cast<std::int64_t>(r_rng.below(spec.keys)));
    for (std::size_t p = 0; p < spec.passthrough; ++p) {
      requests_csv.push_back(',');
      detail::append_number(requests_csv, detail::normal_draw(r_rng));
    }
    requests_csv.push_back('\n');
  }
  detail::write_text_file((base / "requests.csv").string(), requests_csv);

  // Regression holdout: exact raw features with noisy labels, backing the
  // pipeline's MAE delta policy.
  if (!classify && spec.holdout_rows > 0) {
    SplitMix h_rng(mix64(spec.seed, 0xF1, 0));
    std::string holdout_csv;
    for (std::size_t i = 0; i < width; ++i) {
      holdout_csv += (i < k ? "f" : "p") + std::to_string(i < k ? i : i - k) + ",";
    }
    holdout_csv += "label\n";
    std::vector<double> x(width, 0.0);
    for (std::size_t n = 0; n < spec.holdout_rows; ++n) {
      const std::size_t key = h_rng.below(spec.keys);
      for (std::size_t i = 0; i < width; ++i) {
        x[i] = i < k ? exact[i][key] : detail::normal_draw(h_rng);
        detail::append_number(holdout_csv, x[i]);
        holdout_csv.push_back(',');
      }
      const double label =
          predict(model, x).value + spec.noise * detail::normal_draw(h_rng);
      detail::append_number(holdout_csv, label);
      holdout_csv.push_back('\n');
    }
    detail::write_text_file((base / "holdout.csv").string(), holdout_csv);
  }

  // Pipeline spec tying the pieces together.
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (const AggregationSpec& fs : fspecs) {
    nlohmann::ordered_json fj;
    fj["id"] = fs.id;
    fj["table"] = fs.table;
    if (!fs.column.empty()) fj["column"] = fs.column;
    fj["op"] = agg_op_name(fs.op);
    if (fs.op == AggOp::Quantile) fj["quantile"] = fs.quantile;
    fj["partition_by"] = {{"column", "g"}, {"request_field", "g"}};
    if (!fs.predicate.empty()) {
      fj["predicate"] = nlohmann::ordered_json::array(
          {{{"column", "flag"}, {"op", "=="}, {"value", 1}}});
    }
    features.push_back(std::move(fj));
  }
  nlohmann::ordered_json pipeline;
  pipeline["name"] = spec.name;
  pipeline["task"] = task_name(spec.task);
  pipeline["dataset"] = "manifest.json";
  pipeline["model"] = "model.json";
  pipeline["features"] = features;
  if (spec.passthrough > 0) {
    auto pt = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < spec.passthrough; ++p) pt.push_back("p" + std::to_string(p));
    pipeline["passthrough"] = pt;
  }
  if (!classify) pipeline["delta"] = {{"mae", "holdout.csv"}};
  result.pipeline_path = (base / "pipeline.json").string();
  detail::write_json_file(result.pipeline_path, pipeline);

  // Generator summary: declared shapes for downstream integrity checks.
  nlohmann::ordered_json summary;
  summary["name"] = spec.name;
  summary["seed"] = spec.seed;
  summary["task"] = task_name(spec.task);
  summary["features"] = k;
  summary["rows_per_feature"] = spec.rows_per_feature;
  summary["keys"] = spec.keys;
  summary["requests"] = spec.requests;
  summary["model"] = spec.model;
  summary["resilience"] = spec.resilience;
  summary["noise"] = spec.noise;
  if (classify) summary["classes"] = spec.classes;
  summary["passthrough"] = spec.passthrough;
  {
    auto opj = nlohmann::ordered_json::array();
    for (std::size_t j = 0; j < k; ++j) opj.push_back(agg_op_name(ops[j % ops.size()]));
    summary["ops"] = opj;
    auto rows = nlohmann::ordered_json::object();
    for (const auto& [table, n] : result.declared_rows) rows[table] = n;
    summary["declared_rows"] = rows;
    summary["generating_weights"] = result.generating_weights;
    summary["generating_bias"] = result.generating_bias;
  }
  result.summary_path = (base / "synth_summary.json").string();
  detail::write_json_file(result.summary_path, summary);
  return result;
}

}  // namespace apx
