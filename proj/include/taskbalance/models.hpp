#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "taskbalance/datasets.hpp"

namespace taskbalance {

enum class LossKind { square, cross_entropy };

// One affine layer: y = x * weight + bias.
struct LayerParams {
  Eigen::MatrixXd weight;  // in x out
  Eigen::VectorXd bias;    // out
};

// Shared-bottom multi-task predictor. The linear model has no shared block and
// each head maps features directly to outputs; the MLP applies a shared
// feature_dim -> hidden layer with ReLU before the per-task heads.
struct MultiTaskModel {
  std::optional<LayerParams> shared;
  std::vector<LayerParams> heads;

  bool has_shared() const { return shared.has_value(); }
  int task_count() const { return static_cast<int>(heads.size()); }
  Eigen::Index feature_dim() const {
    return shared ? shared->weight.rows() : heads.at(0).weight.rows();
  }
  Eigen::Index head_input_dim() const { return heads.at(0).weight.rows(); }
  Eigen::Index output_dim() const { return heads.at(0).weight.cols(); }

  // Glorot-uniform weights, zero biases, deterministic per seed.
  static MultiTaskModel linear(int feature_dim, int tasks, int outputs,
                               std::uint64_t seed);
  static MultiTaskModel mlp(int feature_dim, int hidden, int tasks, int outputs,
                            std::uint64_t seed);

  void check() const;
};

// Model-shaped container: gradients, Adam moments, descent directions.
struct ParamSet {
  std::optional<LayerParams> shared;
  std::vector<LayerParams> heads;

  static ParamSet zeros_like(const MultiTaskModel& model);
};

// Gradient of one task's loss: the shared block (absent for linear models)
// plus that task's head.
struct GradientPair {
  std::optional<LayerParams> shared_grad;
  LayerParams head_grad;
  int task_index = 0;
};

// Visits every parameter array of a model/ParamSet as (name, data, size), in a
// fixed order. Used by the optimizer, serialization and gradient checks.
using ArrayVisitor = std::function<void(const std::string&, double*, Eigen::Index)>;
using ConstArrayVisitor =
    std::function<void(const std::string&, const double*, Eigen::Index)>;
void for_each_array(MultiTaskModel& model, const ArrayVisitor& fn);
void for_each_array(ParamSet& params, const ArrayVisitor& fn);
void for_each_array(const MultiTaskModel& model, const ConstArrayVisitor& fn);
void for_each_array(const ParamSet& params, const ConstArrayVisitor& fn);

// Predictions for one task: batch x outputs (logits for classification).
Eigen::MatrixXd forward(const MultiTaskModel& model, int task_index,
                        const Eigen::Ref<const Eigen::MatrixXd>& features);

// Mean per-example loss over the batch. Square loss for regression,
// max-subtracted cross-entropy for classification.
double task_loss(const MultiTaskModel& model, int task_index, const TaskData& task,
                 LossKind kind);

// Analytic backward pass; the returned loss equals task_loss on the same batch
// bit for bit.
std::pair<double, GradientPair> task_gradient(const MultiTaskModel& model,
                                              int task_index, const TaskData& task,
                                              LossKind kind);

// value = lambda * sum(p^2) over every parameter; gradient = 2*lambda*p.
std::pair<double, ParamSet> l2_regularizer(const MultiTaskModel& model, double lambda);

// Flat JSON checkpoint of named arrays with shapes.
void save_checkpoint(const MultiTaskModel& model, const std::string& path);
MultiTaskModel load_checkpoint(const std::string& path);

}  // namespace taskbalance
