// taskbalance benchmark harness.
//
//   bench run --config FILE [--parallel N] [--set key.path=value]...
//   bench validate-transform --transform exp --T 50
//   bench bound --T 50 --m 7 --n0 1000 --rho 1 --beta 1 --delta 0.05 --empirical-rh 1.02
//
// TASKBALANCE_OUTPUT overrides the configured output directory.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "taskbalance/benchmark.hpp"
#include "taskbalance/bounds.hpp"
#include "taskbalance/run_config.hpp"
#include "taskbalance/transforms.hpp"

namespace {

std::string format17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_run(const std::string& config_path, int parallel,
            const std::vector<std::string>& overrides) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "cannot open config file: " << config_path << "\n";
    return 2;
  }
  nlohmann::json doc;
  in >> doc;
  for (const std::string& assignment : overrides)
    taskbalance::apply_override(doc, assignment);

  taskbalance::RunConfig config = taskbalance::run_config_from_json(doc);
  if (const char* dir = std::getenv("TASKBALANCE_OUTPUT"); dir && *dir)
    config.output_dir = dir;

  const taskbalance::BenchmarkResult result =
      taskbalance::run_benchmark(config, parallel, &std::cerr);
  std::cout << "completed cells: " << result.rows.size()
            << ", failed: " << result.failures.size() << "\n";
  std::cout << "results: " << config.output_dir << "/results.csv\n";
  return result.all_ok() ? 0 : 1;
}

int cmd_validate_transform(const std::string& kind, double temperature,
                           const std::vector<double>& coefficients, double grid_max,
                           int grid_points) {
  taskbalance::TransformSpec spec;
  if (kind == "identity") {
    spec = taskbalance::TransformSpec::identity();
  } else if (kind == "exp" || kind == "exponential") {
    spec = taskbalance::TransformSpec::exponential(temperature);
  } else if (kind == "poly" || kind == "polynomial") {
    spec = taskbalance::TransformSpec::polynomial(coefficients);
  } else {
    std::cerr << "unknown transform kind: " << kind << "\n";
    return 2;
  }

  const taskbalance::ValidityReport report =
      taskbalance::validate_transform(spec, grid_max, grid_points);

  nlohmann::json out;
  out["transform"] = taskbalance::to_json(spec);
  out["satisfied"] = report.satisfied;
  out["violations"] = nlohmann::json::array();
  for (const auto& v : report.violations)
    out["violations"].push_back({{"condition", v.condition}, {"witness", v.witness}});
  std::cout << out.dump(2) << "\n";
  return report.satisfied ? 0 : 1;
}

int cmd_bound(const taskbalance::BoundInputs& inputs) {
  const taskbalance::BoundOutputs out = taskbalance::linear_model_bound(inputs);
  nlohmann::json doc;
  doc["eta"] = format17(out.eta);
  doc["nu"] = format17(out.nu);
  doc["complexity_term"] = format17(out.complexity_term);
  doc["confidence_term"] = format17(out.confidence_term);
  doc["rh_bound"] = format17(out.rh_bound);
  doc["ri_bound"] = format17(out.ri_bound);
  doc["ri_bound_valid"] = out.ri_bound_valid;
  std::cout << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task loss-balancing benchmark harness"};
  app.require_subcommand(1);

  // run
  std::string config_path;
  int parallel = 1;
  std::vector<std::string> overrides;
  CLI::App* run = app.add_subcommand("run", "execute a benchmark grid");
  run->add_option("--config", config_path, "run configuration JSON")->required();
  run->add_option("--parallel", parallel, "max concurrent cells")
      ->check(CLI::PositiveNumber);
  run->add_option("--set", overrides, "override config values (key.path=value)");

  // validate-transform
  std::string transform_kind;
  double temperature = 50.0;
  std::vector<double> coefficients;
  double grid_max = 100.0;
  int grid_points = 1001;
  CLI::App* validate =
      app.add_subcommand("validate-transform", "check a transformation function");
  validate->add_option("--transform", transform_kind, "identity|exp|poly")->required();
  validate->add_option("--T", temperature, "exponential temperature");
  validate
      ->add_option("--coeffs", coefficients,
                   "polynomial coefficients a_0,a_1,... (lowest degree first)")
      ->delimiter(',');
  validate->add_option("--grid-max", grid_max, "upper end of the check grid");
  validate->add_option("--grid-points", grid_points, "grid resolution");

  // bound
  taskbalance::BoundInputs inputs;
  CLI::App* bound =
      app.add_subcommand("bound", "evaluate the linear-model generalization bound");
  bound->add_option("--T", inputs.T, "transform temperature");
  bound->add_option("--m", inputs.m, "task count");
  bound->add_option("--n0", inputs.n0, "per-task sample count");
  bound->add_option("--rho", inputs.rho, "loss Lipschitz constant");
  bound->add_option("--beta", inputs.beta, "Frobenius-norm budget");
  bound->add_option("--delta", inputs.delta, "confidence level in (0,1)");
  bound->add_option("--empirical-rh", inputs.empirical_rh,
                    "empirical transformed loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, parallel, overrides);
    if (validate->parsed())
      return cmd_validate_transform(transform_kind, temperature, coefficients,
                                    grid_max, grid_points);
    if (bound->parsed()) return cmd_bound(inputs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
