// Command-line front door: pipeline validation, exact and approximate
// request replay, a line-protocol serve mode, and synthetic workload
// generation. Reports are JSON on stdout unless --out names a file.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apx/apx.hpp"

namespace {

struct ServingFlags {
  apx::RequestConfig cfg;
  CLI::Option* delta_opt = nullptr;
  unsigned parallel = 1;
};

// The serving knobs shared by replay and serve. Delta defaults to the
// pipeline's policy (MAE holdout or literal) unless given here.
void add_serving_flags(CLI::App* cmd, ServingFlags& f) {
  cmd->add_option("--alpha", f.cfg.alpha, "initial sample fraction per feature")
      ->capture_default_str();
  cmd->add_option("--gamma", f.cfg.gamma, "growth step as a fraction of total rows")
      ->capture_default_str();
  cmd->add_option("--tau", f.cfg.tau, "required probability that the error bound holds")
      ->capture_default_str();
  f.delta_opt = cmd->add_option("--delta", f.cfg.delta,
                                "error bound (default: the pipeline's delta policy)");
  cmd->add_option("--qmc-m", f.cfg.qmc_m, "quasi-Monte Carlo ensemble size")
      ->capture_default_str();
  cmd->add_option("--bootstrap-b", f.cfg.bootstrap_b,
                  "bootstrap replicates for holistic estimates")
      ->capture_default_str();
  cmd->add_option("--seed", f.cfg.seed, "base random seed")->capture_default_str();
  cmd->add_option("--parallel", f.parallel, "worker threads for request batches")
      ->capture_default_str();
  cmd->add_flag("--debug-bootstrap", f.cfg.debug_bootstrap,
                "cross-check closed-form uncertainty against a bootstrap");
}

apx::RequestConfig resolve_config(const ServingFlags& f, const apx::LoadedPipeline& lp) {
  apx::RequestConfig cfg = f.cfg;
  if (f.delta_opt->count() == 0) cfg.delta = lp.default_delta;
  cfg.check(lp.spec.task);
  return cfg;
}

void emit(const nlohmann::ordered_json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  apx::require(out.good(), "cannot open for writing: " + out_path);
  out << doc.dump(2) << "\n";
  apx::require(out.good(), "write failed: " + out_path);
}

std::vector<apx::AggOp> parse_ops(const std::string& list) {
  std::vector<apx::AggOp> ops;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) ops.push_back(apx::agg_op_from_string(tok));
  }
  return ops;
}

int run_validate(const std::string& pipeline_path, const std::string& requests_path) {
  const apx::LoadedPipeline lp = apx::load_pipeline(pipeline_path);
  nlohmann::ordered_json j;
  j["pipeline"] = lp.spec.name;
  j["task"] = apx::task_name(lp.spec.task);
  j["model"] = apx::model_kind_name(lp.model.kind);
  j["features"] = lp.spec.features.size();
  j["passthrough"] = lp.spec.passthrough.size();
  j["delta"] = lp.default_delta;
  nlohmann::ordered_json tables = nlohmann::ordered_json::object();
  for (const auto& [name, table] : lp.dataset.tables) tables[name] = table.row_count;
  j["table_rows"] = tables;
  if (!requests_path.empty()) {
    const auto requests = apx::load_requests_csv(requests_path);
    apx::validate_requests(lp, requests);
    j["requests"] = requests.size();
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_exact(const std::string& pipeline_path, const std::string& requests_path,
              const std::string& out_path) {
  const apx::LoadedPipeline lp = apx::load_pipeline(pipeline_path);
  const auto requests = apx::load_requests_csv(requests_path);
  apx::validate_requests(lp, requests);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& req : requests) {
    const apx::ServeReport r = apx::exact_serve(lp, req);
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["prediction"] = apx::prediction_to_json(r.prediction);
    j["rows_scanned"] = r.rows_scanned;
    j["wall_ms"] = r.wall_ms;
    rows.push_back(std::move(j));
  }
  emit({{"pipeline", lp.spec.name}, {"requests", rows}}, out_path);
  return 0;
}

int run_replay(const std::string& pipeline_path, const std::string& requests_path,
               const ServingFlags& flags, const std::string& out_path) {
  const apx::LoadedPipeline lp = apx::load_pipeline(pipeline_path);
  const auto requests = apx::load_requests_csv(requests_path);
  const apx::RequestConfig cfg = resolve_config(flags, lp);
  const apx::ReplayReport report = apx::run_replay(lp, requests, cfg, flags.parallel);
  emit(apx::replay_report_to_json(report, lp.spec.name), out_path);
  return 0;
}

int run_serve(const std::string& pipeline_path, const ServingFlags& flags, int port) {
  const apx::LoadedPipeline lp = apx::load_pipeline(pipeline_path);
  const apx::RequestConfig cfg = resolve_config(flags, lp);
  if (port >= 0) {
    apx::LineServer server(lp, cfg);
    const int bound = server.start(port);
    std::cerr << "listening on 127.0.0.1:" << bound << "\n";
    server.wait();
    return 0;
  }
  apx::serve_stream(lp, cfg, std::cin, std::cout, flags.parallel > 1);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"approximate aggregate feature serving"};
  app.require_subcommand(1);

  std::string pipeline_path, requests_path, out_path, out_dir, ops_list;
  ServingFlags flags;
  int port = -1;

  apx::SynthSpec synth;
  std::string synth_task = "regression";

  auto* validate = app.add_subcommand("validate", "load and cross-check a pipeline");
  validate->add_option("pipeline", pipeline_path, "pipeline JSON")->required();
  validate->add_option("--requests", requests_path, "requests CSV to check");

  auto* exact = app.add_subcommand("exact", "serve every request by full scans");
  exact->add_option("pipeline", pipeline_path, "pipeline JSON")->required();
  exact->add_option("--requests", requests_path, "requests CSV")->required();
  exact->add_option("--out", out_path, "report file (default stdout)");

  auto* replay = app.add_subcommand("replay", "replay requests approximately and exactly");
  replay->add_option("pipeline", pipeline_path, "pipeline JSON")->required();
  replay->add_option("--requests", requests_path, "requests CSV")->required();
  replay->add_option("--out", out_path, "report file (default stdout)");
  add_serving_flags(replay, flags);

  auto* serve = app.add_subcommand("serve", "serve newline-delimited JSON requests");
  serve->add_option("pipeline", pipeline_path, "pipeline JSON")->required();
  serve->add_option("--port", port, "TCP port (0 = ephemeral; default: stdin/stdout)");
  add_serving_flags(serve, flags);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic workload");
  synth_cmd->add_option("out_dir", out_dir, "output directory")->required();
  synth_cmd->add_option("--task", synth_task, "regression | classification")
      ->capture_default_str();
  synth_cmd->add_option("--features", synth.features, "aggregation feature count")
      ->capture_default_str();
  synth_cmd->add_option("--rows", synth.rows_per_feature, "rows per feature table")
      ->capture_default_str();
  synth_cmd->add_option("--keys", synth.keys, "partition keys per table")
      ->capture_default_str();
  synth_cmd->add_option("--requests", synth.requests, "request log size")
      ->capture_default_str();
  synth_cmd->add_option("--model", synth.model, "linear | gbdt | rf | mlp")
      ->capture_default_str();
  synth_cmd->add_option("--resilience", synth.resilience, "0 = constant, 1 = calm response")
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "regression label noise")
      ->capture_default_str();
  synth_cmd->add_option("--classes", synth.classes, "class count (classification)")
      ->capture_default_str();
  synth_cmd->add_option("--passthrough", synth.passthrough, "exact request inputs")
      ->capture_default_str();
  synth_cmd->add_option("--ops", ops_list, "comma list cycled per feature (e.g. AVG,SUM)");
  synth_cmd->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  synth_cmd->add_option("--name", synth.name, "pipeline name")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return run_validate(pipeline_path, requests_path);
    if (exact->parsed()) return run_exact(pipeline_path, requests_path, out_path);
    if (replay->parsed()) return run_replay(pipeline_path, requests_path, flags, out_path);
    if (serve->parsed()) return run_serve(pipeline_path, flags, port);
    if (synth_cmd->parsed()) {
      synth.task = apx::task_from_string(synth_task);
      if (!ops_list.empty()) synth.ops = parse_ops(ops_list);
      const apx::SynthResult result = apx::generate_workload(synth, out_dir);
      nlohmann::ordered_json j;
      j["out_dir"] = result.out_dir;
      j["pipeline"] = result.pipeline_path;
      j["summary"] = result.summary_path;
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
