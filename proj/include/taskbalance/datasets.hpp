#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace taskbalance {

enum class TaskKind { regression, classification };

// One task's supervised data. For classification tasks, labels hold class
// indices 0..c-1 stored as integral doubles.
struct TaskData {
  Eigen::MatrixXd features;  // n_i x feature_dim
  Eigen::VectorXd labels;    // length n_i

  Eigen::Index size() const { return features.rows(); }
};

// m tasks sharing a feature dimensionality.
struct MultiTaskDataset {
  std::vector<TaskData> tasks;
  Eigen::Index feature_dim = 0;
  TaskKind kind = TaskKind::regression;
  int num_classes = 0;  // >= 2 when kind == classification

  int task_count() const { return static_cast<int>(tasks.size()); }

  // Throws ValidationError if any structural invariant is broken.
  void check() const;
};

// Controls for the synthetic generator. Per-task difficulty is the label
// noise: N(0, noise^2) on regression targets, or a label-flip probability for
// classification. task_relatedness blends one shared ground-truth direction
// with per-task private ones.
struct SyntheticSpec {
  int task_count = 0;
  int examples_per_task = 0;
  int feature_dim = 0;
  std::vector<double> noise_stddevs;  // length task_count, all >= 0
  double task_relatedness = 1.0;      // in [0, 1]
  TaskKind kind = TaskKind::regression;
  int num_classes = 2;

  void check() const;
};

struct SplitSpec {
  double train_proportion = 0.5;  // in (0, 1)
  std::uint64_t seed = 0;

  void check() const;
};

// Deterministic for a fixed (spec, seed). Task i targets are
// y = <theta*_i, x> + eps for regression; classification labels are the
// argmax of per-class linear logits, flipped to a random other class with
// probability min(noise_stddevs[i], 1). Feature rows are standard normal
// draws rescaled to unit l2 norm.
MultiTaskDataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Loads a headerless whitespace- or comma-delimited numeric file with
// n_features + n_outputs columns and turns each output column into one
// regression task over the shared feature columns. If subsample is given,
// that many rows are drawn uniformly without replacement.
MultiTaskDataset load_multioutput_csv(const std::string& path, int n_features,
                                      int n_outputs,
                                      std::optional<int> subsample = std::nullopt,
                                      std::uint64_t seed = 0);

// Per-task shuffled split; train size = round(proportion * n_i) with half-up
// rounding, remainder to test. Throws ValidationError if either side of any
// task would be empty.
std::pair<MultiTaskDataset, MultiTaskDataset> split(const MultiTaskDataset& dataset,
                                                    const SplitSpec& spec);

// One epoch of mini-batch index slices: a random permutation of 0..n-1 cut
// into consecutive batch_size pieces (the last may be shorter).
std::vector<std::vector<Eigen::Index>> minibatches(const TaskData& task,
                                                   int batch_size,
                                                   std::uint64_t epoch_seed);

// Rows of `task` selected by `rows`, in order.
TaskData gather(const TaskData& task, const std::vector<Eigen::Index>& rows);

// Affine feature/target rescaling fitted on a training split (zero mean, unit
// variance; constant columns are left unscaled). Targets are rescaled per
// task and only for regression data.
struct Standardizer {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  std::vector<double> target_mean;
  std::vector<double> target_scale;
};

Standardizer fit_standardizer(const MultiTaskDataset& train);
void apply_standardizer(const Standardizer& stats, MultiTaskDataset& dataset);

}  // namespace taskbalance
