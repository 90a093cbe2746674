#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "taskbalance/run_config.hpp"

namespace taskbalance {

// One completed grid cell.
struct ResultRow {
  std::string dataset_id;
  std::string strategy;  // name + parameters
  std::string model;
  double proportion = 0.0;
  std::uint64_t seed = 0;
  int steps = 0;
  bool terminated_early = false;
  std::vector<double> task_metrics;
  double macro_metric = 0.0;
  double worst_task_metric = 0.0;  // max MSE / min accuracy
  double wall_time_seconds = 0.0;
};

struct BenchmarkResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> failures;  // "cell_id: error"
  std::vector<std::string> notices;   // e.g. mgda/linear exclusions

  bool all_ok() const { return failures.empty(); }
};

// Deterministic directory-safe identifier for a grid cell.
std::string cell_id(const StrategyKind& strategy, double proportion,
                    std::uint64_t seed);

// Runs every (strategy, proportion, seed) cell, writing per-cell curve CSVs
// plus results.csv and summary.json under config.output_dir. Cell failures
// are recorded and the remaining cells still run. `parallel` caps the number
// of worker threads (1 = sequential). Returns the collected rows/failures;
// the process exit code should be 0 iff all_ok().
BenchmarkResult run_benchmark(const RunConfig& config, int parallel = 1,
                              std::ostream* log = nullptr);

// results.csv serialization (wall_time is the final column so determinism
// comparisons can strip it).
void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);

}  // namespace taskbalance
