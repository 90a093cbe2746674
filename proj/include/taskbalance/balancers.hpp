#pragma once

#include <Eigen/Core>
#include <string>
#include <optional>
#include <vector>

#include "taskbalance/models.hpp"
#include "taskbalance/transforms.hpp"

namespace taskbalance {

// Nonnegative per-task weights produced by a balancing strategy.
struct TaskWeights {
  enum class Normalization { none, sum_to_m, sum_to_1 };

  Eigen::VectorXd weights;
  Normalization normalization = Normalization::none;

  // Throws if a weight is negative or a declared normalization is off by more
  // than 1e-9.
  void check() const;
};

// Per-task training losses with up to two steps of history.
struct LossRecord {
  Eigen::VectorXd current;                // losses at step t
  std::optional<Eigen::VectorXd> prev1;   // step t-1
  std::optional<Eigen::VectorXd> prev2;   // step t-2
};

enum class StrategyId {
  direct_sum,
  fixed,
  dwa,
  maximum,
  soft_maximum,
  curriculum,
  bmtl,
  mgda,
};

// A balancing strategy plus its hyperparameters. Only the fields relevant to
// `id` are meaningful.
struct StrategyKind {
  StrategyId id = StrategyId::direct_sum;
  std::vector<double> fixed_weights;              // fixed: all > 0
  double dwa_temperature = 2.0;                   // dwa: > 0
  double curriculum_temperature = 1.0;            // curriculum: > 0
  TransformSpec transform = TransformSpec::exponential(50.0);  // bmtl

  static StrategyKind direct_sum();
  static StrategyKind fixed(std::vector<double> weights);
  static StrategyKind dwa(double temperature = 2.0);
  static StrategyKind maximum();
  static StrategyKind soft_maximum();
  static StrategyKind curriculum(double temperature = 1.0);
  static StrategyKind bmtl(TransformSpec transform = TransformSpec::exponential(50.0));
  static StrategyKind mgda();

  void check() const;
  std::string name() const;  // e.g. "bmtl[exp(T=50)]"
};

// Per-step weights for every loss-based strategy. mgda has no loss-only weight
// rule and throws StateError here; use solve_min_norm / mgda_step_direction.
// When a transformed loss had to be clamped at the overflow limit a note is
// appended to `warnings` (if given) instead of aborting the step.
TaskWeights compute_weights(const StrategyKind& kind, const LossRecord& record,
                            std::vector<std::string>* warnings = nullptr);

// Min-norm point of the convex hull of the given gradients, solved as the
// simplex-constrained QP min ||sum_i alpha_i g_i||^2 by Frank-Wolfe with exact
// line search (at most 200 iterations or duality gap <= 1e-8).
struct MinNormResult {
  TaskWeights alpha;          // sum_to_1
  Eigen::VectorXd direction;  // sum_i alpha_i g_i
  double min_norm = 0.0;      // ||direction||
  double duality_gap = 0.0;   // Frank-Wolfe certificate at return
  int iterations = 0;
};

MinNormResult solve_min_norm(const std::vector<Eigen::VectorXd>& grads);

// One MGDA step: the min-norm combination of the shared-parameter gradients,
// plus each task's own raw head gradient. `terminated` signals that no common
// descent direction remains.
struct MgdaDirection {
  LayerParams shared_direction;
  std::vector<LayerParams> head_directions;
  TaskWeights alpha;
  double min_norm = 0.0;
  bool terminated = false;
};

MgdaDirection mgda_step_direction(const std::vector<GradientPair>& grads);

// Numerically stable log(sum_i exp(z_i)).
double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& z);

}  // namespace taskbalance
