#include "taskbalance/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "taskbalance/errors.hpp"
#include "taskbalance/rng.hpp"

namespace taskbalance {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kModelInitStream = 0x0de1;

std::string format17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sanitize(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool last_dash = false;
  for (char c : raw) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                      c == '_' || c == '-';
    if (keep) {
      out.push_back(c);
      last_dash = false;
    } else if (!last_dash && !out.empty()) {
      out.push_back('-');
      last_dash = true;
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

// Write-then-rename so concurrent cells never expose half-written files.
void atomic_write(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ValidationError("cannot write: " + tmp.string());
    out << contents;
  }
  fs::rename(tmp, path);
}

struct Cell {
  std::size_t strategy_index;
  double proportion;
  std::uint64_t seed;
};

// Dataset + split for one (proportion, seed) coordinate; identical across
// strategies so per-seed comparisons are paired.
std::pair<MultiTaskDataset, MultiTaskDataset> prepare_data(const RunConfig& config,
                                                           double proportion,
                                                           std::uint64_t seed) {
  MultiTaskDataset full;
  if (config.dataset.source == DatasetConfig::Source::synthetic) {
    full = gen_synthetic(config.dataset.synthetic, seed);
  } else {
    full = load_multioutput_csv(config.dataset.csv_path, config.dataset.csv_features,
                                config.dataset.csv_outputs,
                                config.dataset.csv_subsample, seed);
  }
  auto [train_set, test_set] = split(full, SplitSpec{proportion, seed});
  if (config.dataset.standardize) {
    const Standardizer stats = fit_standardizer(train_set);
    apply_standardizer(stats, train_set);
    apply_standardizer(stats, test_set);
  }
  return {std::move(train_set), std::move(test_set)};
}

MultiTaskModel build_model(const RunConfig& config, const MultiTaskDataset& data,
                           std::uint64_t seed) {
  const int outputs =
      data.kind == TaskKind::classification ? data.num_classes : 1;
  const auto d = static_cast<int>(data.feature_dim);
  const std::uint64_t init_seed = mix64(seed, kModelInitStream);
  if (config.model.kind == ModelConfig::Kind::linear)
    return MultiTaskModel::linear(d, data.task_count(), outputs, init_seed);
  return MultiTaskModel::mlp(d, config.model.hidden, data.task_count(), outputs,
                             init_seed);
}

ResultRow run_cell(const RunConfig& config, const Cell& cell, const fs::path& dir) {
  const StrategyKind& strategy = config.strategies[cell.strategy_index];
  auto [train_set, test_set] = prepare_data(config, cell.proportion, cell.seed);
  const MultiTaskModel model0 = build_model(config, train_set, cell.seed);

  TrainConfig train_config = config.train;
  train_config.strategy = strategy;
  train_config.seed = cell.seed;

  TrainReport report = train(model0, train_set, test_set, train_config);

  fs::create_directories(dir);
  {
    auto dump = [&](const Eigen::MatrixXd& curves) {
      std::ostringstream body;
      body << "step";
      for (Eigen::Index t = 0; t < curves.cols(); ++t) body << ",task_" << t;
      body << "\n";
      for (Eigen::Index s = 0; s < curves.rows(); ++s) {
        body << s;
        for (Eigen::Index t = 0; t < curves.cols(); ++t)
          body << ',' << format17(curves(s, t));
        body << "\n";
      }
      return body.str();
    };
    atomic_write(dir / "loss_curves.csv", dump(report.loss_curves));
    atomic_write(dir / "weight_curves.csv", dump(report.weight_curves));
  }

  ResultRow row;
  row.dataset_id = config.dataset.id;
  row.strategy = strategy.name();
  row.model = config.model.name();
  row.proportion = cell.proportion;
  row.seed = cell.seed;
  row.steps = config.train.steps;
  row.terminated_early = report.terminated_early;
  row.task_metrics.assign(report.test_metrics.per_task.data(),
                          report.test_metrics.per_task.data() +
                              report.test_metrics.per_task.size());
  row.macro_metric = report.test_metrics.macro;
  row.worst_task_metric = test_set.kind == TaskKind::regression
                              ? report.test_metrics.per_task.maxCoeff()
                              : report.test_metrics.per_task.minCoeff();
  row.wall_time_seconds = report.wall_time_seconds;

  nlohmann::json meta;
  meta["strategy"] = to_json(strategy);
  meta["model"] = config.model.name();
  meta["proportion"] = cell.proportion;
  meta["seed"] = cell.seed;
  meta["terminated_early"] = report.terminated_early;
  meta["macro_metric"] = row.macro_metric;
  meta["worst_task_metric"] = row.worst_task_metric;
  meta["task_metrics"] = row.task_metrics;
  meta["notes"] = report.notes;
  meta["warnings"] = report.warnings;
  atomic_write(dir / "metrics.json", meta.dump(2) + "\n");
  return row;
}

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::string cell_id(const StrategyKind& strategy, double proportion,
                    std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", proportion);
  return sanitize(strategy.name()) + "_p" + buf + "_s" + std::to_string(seed);
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ostringstream out;
  const std::size_t metric_count = rows.empty() ? 0 : rows[0].task_metrics.size();
  out << "dataset,strategy,model,proportion,seed,steps,terminated_early,"
         "macro_metric,worst_task_metric";
  for (std::size_t t = 0; t < metric_count; ++t) out << ",task_" << t;
  out << ",wall_time_seconds\n";
  for (const ResultRow& row : rows) {
    out << row.dataset_id << ',' << row.strategy << ',' << row.model << ','
        << format17(row.proportion) << ',' << row.seed << ',' << row.steps << ','
        << (row.terminated_early ? 1 : 0) << ',' << format17(row.macro_metric) << ','
        << format17(row.worst_task_metric);
    for (double v : row.task_metrics) out << ',' << format17(v);
    out << ',' << format17(row.wall_time_seconds) << "\n";
  }
  atomic_write(path, out.str());
}

BenchmarkResult run_benchmark(const RunConfig& config, int parallel,
                              std::ostream* log) {
  config.check();
  if (parallel < 1) throw ValidationError("parallel must be >= 1");

  BenchmarkResult result;
  fs::create_directories(config.output_dir);

  // Grid in fixed order: strategy-major, then proportion, then seed.
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < config.strategies.size(); ++s) {
    if (config.strategies[s].id == StrategyId::mgda &&
        config.model.kind == ModelConfig::Kind::linear) {
      const std::string notice =
          "mgda skipped: the pure linear model has no shared parameters";
      result.notices.push_back(notice);
      if (log) (*log) << notice << "\n";
      continue;
    }
    for (double p : config.proportions)
      for (std::uint64_t seed : config.seeds) cells.push_back({s, p, seed});
  }

  std::vector<ResultRow> rows(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      const std::string id =
          cell_id(config.strategies[cell.strategy_index], cell.proportion, cell.seed);
      try {
        rows[i] = run_cell(config, cell, fs::path(config.output_dir) / id);
        if (log) {
          std::lock_guard<std::mutex> guard(log_mutex);
          (*log) << id << ": macro=" << rows[i].macro_metric
                 << " worst=" << rows[i].worst_task_metric << "\n";
        }
      } catch (const std::exception& e) {
        errors[i] = id + ": " + e.what();
        if (log) {
          std::lock_guard<std::mutex> guard(log_mutex);
          (*log) << "FAILED " << errors[i] << "\n";
        }
      }
    }
  };

  const int workers = std::min<int>(parallel, static_cast<int>(cells.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty())
      result.failures.push_back(errors[i]);
    else
      result.rows.push_back(rows[i]);
  }

  write_results_csv(result.rows, (fs::path(config.output_dir) / "results.csv").string());

  // Per-strategy, per-proportion aggregates across seeds.
  nlohmann::json summary;
  summary["dataset"] = config.dataset.id;
  summary["model"] = config.model.name();
  summary["seeds"] = config.seeds;
  summary["failures"] = result.failures;
  summary["notices"] = result.notices;
  nlohmann::json& per_strategy = summary["strategies"];
  for (const StrategyKind& strategy : config.strategies) {
    const std::string name = strategy.name();
    for (double p : config.proportions) {
      std::vector<double> macro, worst;
      for (const ResultRow& row : result.rows)
        if (row.strategy == name && row.proportion == p) {
          macro.push_back(row.macro_metric);
          worst.push_back(row.worst_task_metric);
        }
      if (macro.empty()) continue;
      nlohmann::json entry;
      entry["seeds_completed"] = macro.size();
      entry["macro_mean"] = mean_of(macro);
      entry["macro_std"] = sample_std(macro);
      entry["macro_stderr"] =
          sample_std(macro) / std::sqrt(static_cast<double>(macro.size()));
      entry["worst_mean"] = mean_of(worst);
      entry["worst_std"] = sample_std(worst);
      entry["worst_stderr"] =
          sample_std(worst) / std::sqrt(static_cast<double>(worst.size()));
      per_strategy[name][format17(p)] = entry;
    }
  }
  atomic_write(fs::path(config.output_dir) / "summary.json", summary.dump(2) + "\n");

  return result;
}

}  // namespace taskbalance
