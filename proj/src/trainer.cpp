#include "taskbalance/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "taskbalance/errors.hpp"
#include "taskbalance/rng.hpp"

namespace taskbalance {

void TrainConfig::check() const {
  if (steps < 1) throw ValidationError("steps must be positive");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (!(eta0 > 0.0)) throw ValidationError("eta0 must be positive");
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ValidationError("adam betas must lie in [0,1)");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
  if (constant_lr && !(*constant_lr > 0.0))
    throw ValidationError("constant_lr must be positive");
  if (!(history_ema_decay >= 0.0 && history_ema_decay < 1.0))
    throw ValidationError("history_ema_decay must lie in [0,1)");
  strategy.check();
}

double lr_at(const TrainConfig& config, long p) {
  if (p < 0) throw ValidationError("schedule index must be nonnegative");
  return config.eta0 / (1.0 + static_cast<double>(p));
}

AdamState AdamState::init(const MultiTaskModel& model, double beta1, double beta2,
                          double eps) {
  AdamState state;
  state.first_moment = ParamSet::zeros_like(model);
  state.second_moment = ParamSet::zeros_like(model);
  state.step = 0;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.eps = eps;
  return state;
}

namespace {

constexpr std::uint64_t kEpochStreamBase = 0xe90c;
constexpr std::uint64_t kInitStream = 0x1217;

bool is_shared_array(const std::string& name) {
  return name.rfind("shared", 0) == 0;
}

struct ArraySlot {
  std::string name;
  double* data;
  Eigen::Index size;
};

struct ConstArraySlot {
  std::string name;
  const double* data;
  Eigen::Index size;
};

std::vector<ArraySlot> collect(ParamSet& params) {
  std::vector<ArraySlot> slots;
  for_each_array(params, [&](const std::string& name, double* data, Eigen::Index n) {
    slots.push_back({name, data, n});
  });
  return slots;
}

std::vector<ConstArraySlot> collect(const ParamSet& params) {
  std::vector<ConstArraySlot> slots;
  for_each_array(params,
                 [&](const std::string& name, const double* data, Eigen::Index n) {
                   slots.push_back({name, data, n});
                 });
  return slots;
}

std::vector<ArraySlot> collect(MultiTaskModel& model) {
  std::vector<ArraySlot> slots;
  for_each_array(model, [&](const std::string& name, double* data, Eigen::Index n) {
    slots.push_back({name, data, n});
  });
  return slots;
}

void check_grad_finite(const ParamSet& grad) {
  for_each_array(grad,
                 [](const std::string& name, const double* data, Eigen::Index n) {
                   for (Eigen::Index i = 0; i < n; ++i)
                     if (!std::isfinite(data[i]))
                       throw NumericError("non-finite gradient in tensor " + name);
                 });
}

// Weighted accumulation: acc += w * layer.
void accumulate(LayerParams& acc, const LayerParams& layer, double w) {
  acc.weight.noalias() += w * layer.weight;
  acc.bias.noalias() += w * layer.bias;
}

// Independent per-task mini-batch cursor: reshuffles each epoch with a stream
// derived from (seed, task index, epoch).
class BatchCursor {
 public:
  BatchCursor(const TaskData& task, int batch_size, std::uint64_t seed,
              std::uint64_t task_index)
      : task_(&task), batch_size_(batch_size), seed_(seed), task_index_(task_index) {}

  std::vector<Eigen::Index> next() {
    if (next_slice_ >= slices_.size()) {
      slices_ = minibatches(
          *task_, batch_size_,
          mix64(seed_, kEpochStreamBase + task_index_, epoch_));
      next_slice_ = 0;
      ++epoch_;
    }
    return slices_[next_slice_++];
  }

  std::uint64_t completed_epochs() const { return epoch_ > 0 ? epoch_ - 1 : 0; }

 private:
  const TaskData* task_;
  int batch_size_;
  std::uint64_t seed_;
  std::uint64_t task_index_;
  std::vector<std::vector<Eigen::Index>> slices_;
  std::size_t next_slice_ = 0;
  std::uint64_t epoch_ = 0;
};

}  // namespace

void adam_step(MultiTaskModel& model, const ParamSet& grad, AdamState& state,
               double lr, bool update_shared) {
  check_grad_finite(grad);
  auto params = collect(model);
  auto grads = collect(grad);
  auto m1 = collect(state.first_moment);
  auto m2 = collect(state.second_moment);
  if (params.size() != grads.size() || params.size() != m1.size() ||
      params.size() != m2.size())
    throw ValidationError("gradient/model structure mismatch");

  const long t = state.step + 1;
  const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));

  for (std::size_t a = 0; a < params.size(); ++a) {
    if (params[a].size != grads[a].size)
      throw ValidationError("gradient/model shape mismatch in " + params[a].name);
    if (!update_shared && is_shared_array(params[a].name)) continue;
    double* p = params[a].data;
    const double* g = grads[a].data;
    double* mom1 = m1[a].data;
    double* mom2 = m2[a].data;
    for (Eigen::Index i = 0; i < params[a].size; ++i) {
      mom1[i] = state.beta1 * mom1[i] + (1.0 - state.beta1) * g[i];
      mom2[i] = state.beta2 * mom2[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = mom1[i] / corr1;
      const double vhat = mom2[i] / corr2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  ++state.step;
}

void gradient_step(MultiTaskModel& model, const ParamSet& grad, double lr,
                   bool update_shared) {
  check_grad_finite(grad);
  auto params = collect(model);
  auto grads = collect(grad);
  if (params.size() != grads.size())
    throw ValidationError("gradient/model structure mismatch");
  for (std::size_t a = 0; a < params.size(); ++a) {
    if (params[a].size != grads[a].size)
      throw ValidationError("gradient/model shape mismatch in " + params[a].name);
    if (!update_shared && is_shared_array(params[a].name)) continue;
    for (Eigen::Index i = 0; i < params[a].size; ++i)
      params[a].data[i] -= lr * grads[a].data[i];
  }
}

LossKind loss_kind_for(const MultiTaskDataset& dataset) {
  return dataset.kind == TaskKind::regression ? LossKind::square
                                              : LossKind::cross_entropy;
}

TrainReport train(const MultiTaskModel& model0, const MultiTaskDataset& train_set,
                  const MultiTaskDataset& test_set, const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  config.check();
  train_set.check();
  test_set.check();
  model0.check();

  const int m = train_set.task_count();
  if (model0.task_count() != m)
    throw ValidationError("model head count does not match task count");
  if (model0.feature_dim() != train_set.feature_dim)
    throw ValidationError("model feature_dim does not match dataset");
  if (test_set.task_count() != m)
    throw ValidationError("train/test task counts differ");
  if (config.strategy.id == StrategyId::mgda && !model0.has_shared())
    throw ConfigError("mgda requires a model with shared parameters");

  const LossKind kind = loss_kind_for(train_set);
  MultiTaskModel model = model0;
  AdamState state = AdamState::init(model, config.adam_beta1, config.adam_beta2,
                                    config.adam_eps);

  TrainReport report;
  report.loss_curves.resize(config.steps, m);
  report.weight_curves.resize(config.steps, m);

  const bool uses_history = config.strategy.id == StrategyId::dwa ||
                            config.strategy.id == StrategyId::curriculum;
  if (uses_history) {
    report.notes.push_back(
        config.raw_history
            ? "history: raw per-batch losses"
            : "history: EMA(decay=" + std::to_string(config.history_ema_decay) +
                  ") of per-batch losses");
  }
  report.notes.push_back(
      "weights use current-step batch losses (bmtl/maximum/soft_maximum) and "
      "previous-step history (dwa/curriculum)");
  if (config.strategy.id == StrategyId::mgda && config.lambda > 0.0)
    report.notes.push_back(
        "mgda: regularizer gradient applied to heads only, not to the shared "
        "direction");

  std::vector<BatchCursor> cursors;
  cursors.reserve(static_cast<std::size_t>(m));
  for (int t = 0; t < m; ++t)
    cursors.emplace_back(train_set.tasks[static_cast<std::size_t>(t)],
                         config.batch_size, config.seed,
                         static_cast<std::uint64_t>(t));

  std::optional<Eigen::VectorXd> hist1, hist2;  // step losses at t-1, t-2
  Eigen::VectorXd ema;
  bool mgda_stopped = false;

  const auto steps_per_epoch = [&] {
    if (config.full_batch) return Eigen::Index{1};
    Eigen::Index max_n = 1;
    for (const auto& task : train_set.tasks) max_n = std::max(max_n, task.size());
    return (max_n + config.batch_size - 1) / config.batch_size;
  }();

  for (int step = 0; step < config.steps; ++step) {
    try {
      // Per-task batch losses and gradients, reduced in task-index order.
      Eigen::VectorXd current(m);
      std::vector<GradientPair> grads;
      grads.reserve(static_cast<std::size_t>(m));
      for (int t = 0; t < m; ++t) {
        const TaskData& full = train_set.tasks[static_cast<std::size_t>(t)];
        const TaskData batch =
            config.full_batch ? full : gather(full, cursors[static_cast<std::size_t>(t)].next());
        auto [loss, grad] = task_gradient(model, t, batch, kind);
        current[t] = loss;
        grads.push_back(std::move(grad));
      }
      report.loss_curves.row(step) = current.transpose();

      ParamSet combined = ParamSet::zeros_like(model);
      Eigen::VectorXd applied(m);

      if (config.strategy.id == StrategyId::mgda) {
        MgdaDirection dir = mgda_step_direction(grads);
        applied = dir.alpha.weights;
        if (dir.terminated && !mgda_stopped) {
          mgda_stopped = true;
          report.terminated_early = true;
        }
        if (!mgda_stopped && combined.shared) {
          combined.shared->weight = dir.shared_direction.weight;
          combined.shared->bias = dir.shared_direction.bias;
        }
        for (int t = 0; t < m; ++t)
          combined.heads[static_cast<std::size_t>(t)] =
              dir.head_directions[static_cast<std::size_t>(t)];
      } else {
        LossRecord record;
        record.current = current;
        record.prev1 = hist1;
        record.prev2 = hist2;
        TaskWeights weights;
        if (config.strategy.id == StrategyId::dwa && (!hist1 || !hist2)) {
          // Warm-up: uniform weights until two steps of history exist.
          weights.weights = Eigen::VectorXd::Ones(m);
          weights.normalization = TaskWeights::Normalization::sum_to_m;
        } else {
          weights = compute_weights(config.strategy, record, &report.warnings);
        }
        applied = weights.weights;
        for (int t = 0; t < m; ++t) {
          const auto ti = static_cast<std::size_t>(t);
          if (combined.shared && grads[ti].shared_grad)
            accumulate(*combined.shared, *grads[ti].shared_grad, applied[t]);
          accumulate(combined.heads[ti], grads[ti].head_grad, applied[t]);
        }
      }
      report.weight_curves.row(step) = applied.transpose();

      if (config.lambda > 0.0) {
        auto [reg_value, reg_grad] = l2_regularizer(model, config.lambda);
        (void)reg_value;
        if (combined.shared && config.strategy.id != StrategyId::mgda)
          accumulate(*combined.shared, *reg_grad.shared, 1.0);
        for (int t = 0; t < m; ++t)
          accumulate(combined.heads[static_cast<std::size_t>(t)],
                     reg_grad.heads[static_cast<std::size_t>(t)], 1.0);
      }

      const long schedule_index =
          config.decay_per_epoch ? step / steps_per_epoch : step;
      const double lr =
          config.constant_lr ? *config.constant_lr : lr_at(config, schedule_index);
      const bool update_shared = !mgda_stopped;
      if (config.use_adam)
        adam_step(model, combined, state, lr, update_shared);
      else
        gradient_step(model, combined, lr, update_shared);

      // History reflects losses measured at this step.
      if (config.raw_history) {
        hist2 = hist1;
        hist1 = current;
      } else {
        if (ema.size() == 0)
          ema = current;
        else
          ema = config.history_ema_decay * ema +
                (1.0 - config.history_ema_decay) * current;
        hist2 = hist1;
        hist1 = ema;
      }
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step) + ": " + e.what());
    } catch (const StateError& e) {
      throw StateError("step " + std::to_string(step) + ": " + e.what());
    }
  }

  report.test_metrics = evaluate(model, test_set, kind);
  report.final_model = std::move(model);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

TaskMetrics evaluate(const MultiTaskModel& model, const MultiTaskDataset& test_set,
                     LossKind kind) {
  test_set.check();
  const int m = test_set.task_count();
  if (model.task_count() != m)
    throw ValidationError("model head count does not match task count");

  TaskMetrics metrics;
  metrics.per_task.resize(m);
  for (int t = 0; t < m; ++t) {
    const TaskData& task = test_set.tasks[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd pred = forward(model, t, task.features);
    if (kind == LossKind::square) {
      metrics.per_task[t] =
          (pred.col(0) - task.labels).squaredNorm() / static_cast<double>(task.size());
    } else {
      Eigen::Index correct = 0;
      for (Eigen::Index j = 0; j < task.size(); ++j) {
        Eigen::Index argmax = 0;
        pred.row(j).maxCoeff(&argmax);
        if (static_cast<double>(argmax) == task.labels[j]) ++correct;
      }
      metrics.per_task[t] =
          static_cast<double>(correct) / static_cast<double>(task.size());
    }
  }
  metrics.macro = metrics.per_task.mean();
  return metrics;
}

void write_curves_csv(const Eigen::MatrixXd& curves, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write: " + path);
  out << "step";
  for (Eigen::Index t = 0; t < curves.cols(); ++t) out << ",task_" << t;
  out << "\n";
  char buf[64];
  for (Eigen::Index s = 0; s < curves.rows(); ++s) {
    out << s;
    for (Eigen::Index t = 0; t < curves.cols(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", curves(s, t));
      out << ',' << buf;
    }
    out << "\n";
  }
}

}  // namespace taskbalance
