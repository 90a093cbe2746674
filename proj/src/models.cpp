#include "taskbalance/models.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "taskbalance/errors.hpp"
#include "taskbalance/rng.hpp"

namespace taskbalance {

namespace {

LayerParams glorot_layer(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  LayerParams layer;
  layer.weight.resize(in, out);
  for (Eigen::Index i = 0; i < in; ++i)
    for (Eigen::Index j = 0; j < out; ++j) layer.weight(i, j) = uniform(rng);
  layer.bias = Eigen::VectorXd::Zero(out);
  return layer;
}

void visit_layer(const std::string& prefix, LayerParams& layer,
                 const ArrayVisitor& fn) {
  fn(prefix + ".weight", layer.weight.data(), layer.weight.size());
  fn(prefix + ".bias", layer.bias.data(), layer.bias.size());
}

void visit_layer(const std::string& prefix, const LayerParams& layer,
                 const ConstArrayVisitor& fn) {
  fn(prefix + ".weight", layer.weight.data(), layer.weight.size());
  fn(prefix + ".bias", layer.bias.data(), layer.bias.size());
}

}  // namespace

MultiTaskModel MultiTaskModel::linear(int feature_dim, int tasks, int outputs,
                                      std::uint64_t seed) {
  MultiTaskModel model;
  for (int t = 0; t < tasks; ++t) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(t) + 1);
    model.heads.push_back(glorot_layer(feature_dim, outputs, rng));
  }
  model.check();
  return model;
}

MultiTaskModel MultiTaskModel::mlp(int feature_dim, int hidden, int tasks,
                                   int outputs, std::uint64_t seed) {
  MultiTaskModel model;
  auto shared_rng = make_rng(seed, 0);
  model.shared = glorot_layer(feature_dim, hidden, shared_rng);
  for (int t = 0; t < tasks; ++t) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(t) + 1);
    model.heads.push_back(glorot_layer(hidden, outputs, rng));
  }
  model.check();
  return model;
}

void MultiTaskModel::check() const {
  if (heads.empty()) throw ValidationError("model has no heads");
  const Eigen::Index in = heads[0].weight.rows();
  const Eigen::Index out = heads[0].weight.cols();
  for (const LayerParams& head : heads) {
    if (head.weight.rows() != in || head.weight.cols() != out ||
        head.bias.size() != out)
      throw ValidationError("inconsistent head shapes");
    if (!head.weight.allFinite() || !head.bias.allFinite())
      throw NumericError("non-finite head parameters");
  }
  if (shared) {
    if (shared->weight.cols() != in || shared->bias.size() != in)
      throw ValidationError("shared output width does not match head input");
    if (!shared->weight.allFinite() || !shared->bias.allFinite())
      throw NumericError("non-finite shared parameters");
  }
}

ParamSet ParamSet::zeros_like(const MultiTaskModel& model) {
  ParamSet out;
  if (model.shared) {
    out.shared = LayerParams{
        Eigen::MatrixXd::Zero(model.shared->weight.rows(), model.shared->weight.cols()),
        Eigen::VectorXd::Zero(model.shared->bias.size())};
  }
  for (const LayerParams& head : model.heads)
    out.heads.push_back(LayerParams{
        Eigen::MatrixXd::Zero(head.weight.rows(), head.weight.cols()),
        Eigen::VectorXd::Zero(head.bias.size())});
  return out;
}

void for_each_array(MultiTaskModel& model, const ArrayVisitor& fn) {
  if (model.shared) visit_layer("shared", *model.shared, fn);
  for (std::size_t t = 0; t < model.heads.size(); ++t)
    visit_layer("head." + std::to_string(t), model.heads[t], fn);
}

void for_each_array(ParamSet& params, const ArrayVisitor& fn) {
  if (params.shared) visit_layer("shared", *params.shared, fn);
  for (std::size_t t = 0; t < params.heads.size(); ++t)
    visit_layer("head." + std::to_string(t), params.heads[t], fn);
}

void for_each_array(const MultiTaskModel& model, const ConstArrayVisitor& fn) {
  if (model.shared) visit_layer("shared", *model.shared, fn);
  for (std::size_t t = 0; t < model.heads.size(); ++t)
    visit_layer("head." + std::to_string(t), model.heads[t], fn);
}

void for_each_array(const ParamSet& params, const ConstArrayVisitor& fn) {
  if (params.shared) visit_layer("shared", *params.shared, fn);
  for (std::size_t t = 0; t < params.heads.size(); ++t)
    visit_layer("head." + std::to_string(t), params.heads[t], fn);
}

namespace {

void check_forward_args(const MultiTaskModel& model, int task_index,
                        const Eigen::Ref<const Eigen::MatrixXd>& features) {
  if (task_index < 0 || task_index >= model.task_count())
    throw ValidationError("task index out of range");
  if (features.cols() != model.feature_dim())
    throw ValidationError("feature width does not match model feature_dim");
}

// Hidden activations for the shared block, or the features themselves for a
// pure linear model.
Eigen::MatrixXd head_input(const MultiTaskModel& model,
                           const Eigen::Ref<const Eigen::MatrixXd>& features) {
  if (!model.shared) return features;
  Eigen::MatrixXd pre =
      (features * model.shared->weight).rowwise() + model.shared->bias.transpose();
  return pre.cwiseMax(0.0);
}

void check_loss_kind(const MultiTaskModel& model, LossKind kind) {
  if (kind == LossKind::square && model.output_dim() != 1)
    throw ValidationError("square loss requires a single output per head");
  if (kind == LossKind::cross_entropy && model.output_dim() < 2)
    throw ValidationError("cross-entropy requires at least two logits");
}

int class_label(double y, Eigen::Index classes) {
  const int label = static_cast<int>(y);
  if (static_cast<double>(label) != y || label < 0 || label >= classes)
    throw ValidationError("label is not a valid class index");
  return label;
}

}  // namespace

Eigen::MatrixXd forward(const MultiTaskModel& model, int task_index,
                        const Eigen::Ref<const Eigen::MatrixXd>& features) {
  check_forward_args(model, task_index, features);
  const LayerParams& head = model.heads[static_cast<std::size_t>(task_index)];
  return (head_input(model, features) * head.weight).rowwise() +
         head.bias.transpose();
}

double task_loss(const MultiTaskModel& model, int task_index, const TaskData& task,
                 LossKind kind) {
  check_loss_kind(model, kind);
  const Eigen::MatrixXd pred = forward(model, task_index, task.features);
  const auto n = task.size();
  if (task.labels.size() != n) throw ValidationError("label count mismatch");

  double loss = 0.0;
  if (kind == LossKind::square) {
    loss = (pred.col(0) - task.labels).squaredNorm() / static_cast<double>(n);
  } else {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto logits = pred.row(j);
      const double zmax = logits.maxCoeff();
      const double lse = zmax + std::log((logits.array() - zmax).exp().sum());
      loss += lse - logits[class_label(task.labels[j], pred.cols())];
    }
    loss /= static_cast<double>(n);
  }
  if (!std::isfinite(loss)) throw NumericError("task loss is not finite");
  return loss;
}

std::pair<double, GradientPair> task_gradient(const MultiTaskModel& model,
                                              int task_index, const TaskData& task,
                                              LossKind kind) {
  check_loss_kind(model, kind);
  check_forward_args(model, task_index, task.features);
  const auto n = task.size();
  if (task.labels.size() != n) throw ValidationError("label count mismatch");

  const LayerParams& head = model.heads[static_cast<std::size_t>(task_index)];

  Eigen::MatrixXd pre;     // shared pre-activation (MLP only)
  Eigen::MatrixXd hidden;  // head input
  if (model.shared) {
    pre = (task.features * model.shared->weight).rowwise() +
          model.shared->bias.transpose();
    hidden = pre.cwiseMax(0.0);
  } else {
    hidden = task.features;
  }
  const Eigen::MatrixXd pred =
      (hidden * head.weight).rowwise() + head.bias.transpose();

  // d(loss)/d(pred), already averaged over the batch.
  double loss = 0.0;
  Eigen::MatrixXd dpred(n, pred.cols());
  if (kind == LossKind::square) {
    const Eigen::VectorXd residual = pred.col(0) - task.labels;
    loss = residual.squaredNorm() / static_cast<double>(n);
    dpred.col(0) = 2.0 * residual / static_cast<double>(n);
  } else {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto logits = pred.row(j);
      const double zmax = logits.maxCoeff();
      const Eigen::RowVectorXd shifted = (logits.array() - zmax).exp();
      const double denom = shifted.sum();
      const double lse = zmax + std::log(denom);
      const int label = class_label(task.labels[j], pred.cols());
      loss += lse - logits[label];
      dpred.row(j) = shifted / denom;
      dpred(j, label) -= 1.0;
    }
    loss /= static_cast<double>(n);
    dpred /= static_cast<double>(n);
  }
  if (!std::isfinite(loss)) throw NumericError("task loss is not finite");

  GradientPair grad;
  grad.task_index = task_index;
  grad.head_grad.weight = hidden.transpose() * dpred;
  grad.head_grad.bias = dpred.colwise().sum().transpose();
  if (model.shared) {
    Eigen::MatrixXd dhidden = dpred * head.weight.transpose();
    dhidden = (pre.array() > 0.0).select(dhidden, 0.0);
    grad.shared_grad = LayerParams{task.features.transpose() * dhidden,
                                   dhidden.colwise().sum().transpose()};
  }
  return {loss, std::move(grad)};
}

std::pair<double, ParamSet> l2_regularizer(const MultiTaskModel& model,
                                           double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
  ParamSet grad = ParamSet::zeros_like(model);
  double value = 0.0;
  if (lambda == 0.0) return {value, std::move(grad)};

  std::vector<std::pair<double*, Eigen::Index>> grad_arrays;
  for_each_array(grad, [&](const std::string&, double* data, Eigen::Index size) {
    grad_arrays.emplace_back(data, size);
  });
  std::size_t slot = 0;
  for_each_array(model,
                 [&](const std::string&, const double* data, Eigen::Index size) {
                   auto [gdata, gsize] = grad_arrays[slot++];
                   (void)gsize;
                   for (Eigen::Index i = 0; i < size; ++i) {
                     value += lambda * data[i] * data[i];
                     gdata[i] = 2.0 * lambda * data[i];
                   }
                 });
  return {value, std::move(grad)};
}

void save_checkpoint(const MultiTaskModel& model, const std::string& path) {
  nlohmann::json doc = nlohmann::json::object();
  for_each_array(model, [&](const std::string& name, const double* data,
                            Eigen::Index size) {
    doc[name]["data"] = std::vector<double>(data, data + size);
  });
  if (model.shared) {
    doc["shared.weight"]["shape"] = {model.shared->weight.rows(),
                                     model.shared->weight.cols()};
    doc["shared.bias"]["shape"] = {model.shared->bias.size()};
  }
  for (std::size_t t = 0; t < model.heads.size(); ++t) {
    const std::string prefix = "head." + std::to_string(t);
    doc[prefix + ".weight"]["shape"] = {model.heads[t].weight.rows(),
                                        model.heads[t].weight.cols()};
    doc[prefix + ".bias"]["shape"] = {model.heads[t].bias.size()};
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << doc.dump(2) << "\n";
}

namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& entry) {
  const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = entry.at("data").get<std::vector<double>>();
  if (shape.size() != 2) throw ValidationError("checkpoint matrix needs a 2-d shape");
  if (static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw ValidationError("checkpoint matrix data does not match its shape");
  Eigen::MatrixXd m(shape[0], shape[1]);
  // Column-major storage, matching the visitor's raw-array order.
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& entry) {
  const auto data = entry.at("data").get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(),
                                           static_cast<Eigen::Index>(data.size()));
}

}  // namespace

MultiTaskModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read checkpoint: " + path);
  nlohmann::json doc;
  in >> doc;

  MultiTaskModel model;
  if (doc.contains("shared.weight"))
    model.shared = LayerParams{matrix_from_json(doc.at("shared.weight")),
                               vector_from_json(doc.at("shared.bias"))};
  for (std::size_t t = 0;; ++t) {
    const std::string prefix = "head." + std::to_string(t);
    if (!doc.contains(prefix + ".weight")) break;
    model.heads.push_back(LayerParams{matrix_from_json(doc.at(prefix + ".weight")),
                                      vector_from_json(doc.at(prefix + ".bias"))});
  }
  model.check();
  return model;
}

}  // namespace taskbalance
