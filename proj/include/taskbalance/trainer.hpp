#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taskbalance/balancers.hpp"
#include "taskbalance/datasets.hpp"
#include "taskbalance/models.hpp"

namespace taskbalance {

struct TrainConfig {
  int steps = 1000;
  int batch_size = 32;
  double eta0 = 0.02;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 0.0;  // l2 regularizer coefficient
  StrategyKind strategy;
  std::uint64_t seed = 0;

  // Debug/diagnostic knobs. Plain gradient descent and full-batch losses are
  // what the convex-descent and common-descent properties hold for; the
  // default stochastic Adam path is the benchmark protocol.
  bool use_adam = true;
  bool full_batch = false;
  bool decay_per_epoch = false;       // schedule index counts epochs, not steps
  std::optional<double> constant_lr;  // overrides the eta0/(1+p) schedule
  bool raw_history = false;           // feed raw batch losses to dwa/curriculum
  double history_ema_decay = 0.9;

  void check() const;
};

// Learning-rate schedule eta_p = eta0 / (1 + p).
double lr_at(const TrainConfig& config, long p);

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  long step = 0;  // completed updates
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const MultiTaskModel& model, double beta1 = 0.9,
                        double beta2 = 0.999, double eps = 1e-8);
};

// One bias-corrected Adam update, in place. Throws NumericError naming the
// offending tensor if the gradient is not finite. When update_shared is false
// the shared block (params and moments) is left untouched.
void adam_step(MultiTaskModel& model, const ParamSet& grad, AdamState& state,
               double lr, bool update_shared = true);

// Plain gradient-descent update (debug mode).
void gradient_step(MultiTaskModel& model, const ParamSet& grad, double lr,
                   bool update_shared = true);

struct TaskMetrics {
  Eigen::VectorXd per_task;  // MSE for regression, accuracy for classification
  double macro = 0.0;        // unweighted mean over tasks
};

struct TrainReport {
  Eigen::MatrixXd loss_curves;    // steps x m per-task mini-batch losses
  Eigen::MatrixXd weight_curves;  // steps x m applied weights (alpha for mgda)
  TaskMetrics test_metrics;
  bool terminated_early = false;  // mgda found no common descent direction
  double wall_time_seconds = 0.0;
  std::vector<std::string> warnings;  // overflow clamps and similar events
  std::vector<std::string> notes;     // protocol metadata (history mode, hybrids)
  MultiTaskModel final_model;
};

// Runs the full optimization loop: one mini-batch per task per step with
// independent per-task cursors, strategy-weighted gradient combination,
// Adam (or plain GD) updates under the 1/(1+p) schedule, per-step curve
// recording, and a final test-set evaluation.
TrainReport train(const MultiTaskModel& model0, const MultiTaskDataset& train_set,
                  const MultiTaskDataset& test_set, const TrainConfig& config);

// Per-task test metric plus unweighted macro average.
TaskMetrics evaluate(const MultiTaskModel& model, const MultiTaskDataset& test_set,
                     LossKind kind);

LossKind loss_kind_for(const MultiTaskDataset& dataset);

// Curve matrix as CSV with header "step,task_0,...,task_{m-1}" and 17
// significant digits.
void write_curves_csv(const Eigen::MatrixXd& curves, const std::string& path);

}  // namespace taskbalance
