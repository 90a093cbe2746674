#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "taskbalance/errors.hpp"
#include "taskbalance/models.hpp"
#include "taskbalance/rng.hpp"

using namespace taskbalance;

namespace {

// ---------------------------------------------------------------------------
// Test-side oracles. Plain scalar loops, no Eigen products, so they share no
// code path with the implementation they check.
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> oracle_forward(const MultiTaskModel& model,
                                                int task, const TaskData& data) {
  const auto n = data.features.rows();
  const auto d = data.features.cols();
  const LayerParams& head = model.heads[static_cast<std::size_t>(task)];
  const auto out = head.weight.cols();

  std::vector<std::vector<double>> result(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    std::vector<double> input;
    if (model.shared) {
      const auto hidden_width = model.shared->weight.cols();
      for (Eigen::Index h = 0; h < hidden_width; ++h) {
        double z = model.shared->bias[h];
        for (Eigen::Index k = 0; k < d; ++k)
          z += data.features(j, k) * model.shared->weight(k, h);
        input.push_back(z > 0.0 ? z : 0.0);
      }
    } else {
      for (Eigen::Index k = 0; k < d; ++k) input.push_back(data.features(j, k));
    }
    for (Eigen::Index o = 0; o < out; ++o) {
      double p = head.bias[o];
      for (std::size_t k = 0; k < input.size(); ++k)
        p += input[k] * head.weight(static_cast<Eigen::Index>(k), o);
      result[static_cast<std::size_t>(j)].push_back(p);
    }
  }
  return result;
}

double oracle_loss(const MultiTaskModel& model, int task, const TaskData& data,
                   LossKind kind) {
  const auto pred = oracle_forward(model, task, data);
  double total = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (kind == LossKind::square) {
      const double r = pred[j][0] - data.labels[static_cast<Eigen::Index>(j)];
      total += r * r;
    } else {
      double zmax = pred[j][0];
      for (double z : pred[j]) zmax = std::max(zmax, z);
      double sum = 0.0;
      for (double z : pred[j]) sum += std::exp(z - zmax);
      const double lse = zmax + std::log(sum);
      total += lse - pred[j][static_cast<std::size_t>(
                         data.labels[static_cast<Eigen::Index>(j)])];
    }
  }
  return total / static_cast<double>(pred.size());
}

struct RandomInstance {
  MultiTaskModel model;
  TaskData batch;
  int task = 0;
};

// Random model + batch, avoiding near-zero shared pre-activations so central
// differences never straddle a ReLU kink.
RandomInstance random_instance(std::mt19937_64& rng, bool mlp, LossKind kind) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> task_dist(0, 2);
  const int d = 5, hidden = 8, m = 3, n = 4;
  const int out = kind == LossKind::square ? 1 : 3;

  while (true) {
    RandomInstance inst;
    inst.model = mlp ? MultiTaskModel::mlp(d, hidden, m, out, rng())
                     : MultiTaskModel::linear(d, m, out, rng());
    for_each_array(inst.model,
                   [&](const std::string&, double* data, Eigen::Index size) {
                     for (Eigen::Index i = 0; i < size; ++i) data[i] = normal(rng);
                   });
    inst.task = task_dist(rng);
    inst.batch.features.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) inst.batch.features(i, j) = normal(rng);
    inst.batch.labels.resize(n);
    if (kind == LossKind::square) {
      for (Eigen::Index i = 0; i < n; ++i) inst.batch.labels[i] = normal(rng);
    } else {
      std::uniform_int_distribution<int> label(0, out - 1);
      for (Eigen::Index i = 0; i < n; ++i)
        inst.batch.labels[i] = static_cast<double>(label(rng));
    }

    if (inst.model.shared) {
      const Eigen::MatrixXd pre =
          (inst.batch.features * inst.model.shared->weight).rowwise() +
          inst.model.shared->bias.transpose();
      if (pre.array().abs().minCoeff() < 1e-4) continue;  // redraw
    }
    return inst;
  }
}

// Central finite differences over every parameter, flattened in visitor order.
std::vector<double> finite_difference_gradient(MultiTaskModel& model, int task,
                                               const TaskData& batch, LossKind kind,
                                               double step) {
  std::vector<double> grad;
  for_each_array(model, [&](const std::string&, double* data, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = task_loss(model, task, batch, kind);
      data[i] = saved - step;
      const double down = task_loss(model, task, batch, kind);
      data[i] = saved;
      grad.push_back((up - down) / (2.0 * step));
    }
  });
  return grad;
}

std::vector<double> flatten_gradient(const MultiTaskModel& model,
                                     const GradientPair& grad) {
  ParamSet full = ParamSet::zeros_like(model);
  if (grad.shared_grad) full.shared = *grad.shared_grad;
  full.heads[static_cast<std::size_t>(grad.task_index)] = grad.head_grad;
  std::vector<double> flat;
  for_each_array(full,
                 [&](const std::string&, const double* data, Eigen::Index size) {
                   flat.insert(flat.end(), data, data + size);
                 });
  return flat;
}

}  // namespace

TEST_CASE("forward: zero model predicts zero") {
  MultiTaskModel model = MultiTaskModel::mlp(4, 6, 2, 1, 1);
  for_each_array(model, [](const std::string&, double* data, Eigen::Index size) {
    std::fill(data, data + size, 0.0);
  });
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  CHECK(forward(model, 0, x).isZero(0.0));
}

TEST_CASE("forward: linear model with basis-vector weights selects a column") {
  MultiTaskModel model = MultiTaskModel::linear(3, 1, 1, 1);
  model.heads[0].weight.setZero();
  model.heads[0].weight(0, 0) = 1.0;
  model.heads[0].bias.setZero();
  Eigen::MatrixXd x(2, 3);
  x << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  const Eigen::MatrixXd pred = forward(model, 0, x);
  CHECK(pred(0, 0) == 1.0);
  CHECK(pred(1, 0) == 4.0);
}

TEST_CASE("forward: shape mismatch is rejected") {
  const MultiTaskModel model = MultiTaskModel::linear(3, 2, 1, 1);
  const Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 4);
  CHECK_THROWS_AS(forward(model, 0, bad), ValidationError);
  CHECK_THROWS_AS(forward(model, 5, Eigen::MatrixXd::Zero(2, 3)), ValidationError);
}

TEST_CASE("forward matches the scalar-loop oracle") {
  auto rng = make_rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_instance(rng, true, LossKind::square);
    const Eigen::MatrixXd pred = forward(inst.model, inst.task, inst.batch.features);
    const auto expect = oracle_forward(inst.model, inst.task, inst.batch);
    for (Eigen::Index j = 0; j < pred.rows(); ++j)
      CHECK(pred(j, 0) ==
            doctest::Approx(expect[static_cast<std::size_t>(j)][0]).epsilon(1e-12));
  }
}

TEST_CASE("task_loss: exact fits and uniform logits") {
  // Perfect predictions give zero square loss.
  MultiTaskModel model = MultiTaskModel::linear(2, 1, 1, 3);
  model.heads[0].weight << 1.0, 0.0;
  model.heads[0].bias.setZero();
  TaskData task;
  task.features = Eigen::MatrixXd::Random(6, 2);
  task.labels = task.features.col(0);
  CHECK(task_loss(model, 0, task, LossKind::square) == 0.0);

  // Uniform logits give exactly ln c.
  const int c = 5;
  MultiTaskModel clf = MultiTaskModel::linear(2, 1, c, 3);
  for_each_array(clf, [](const std::string&, double* data, Eigen::Index size) {
    std::fill(data, data + size, 0.0);
  });
  TaskData ctask;
  ctask.features = Eigen::MatrixXd::Random(4, 2);
  ctask.labels = Eigen::VectorXd::Zero(4);
  CHECK(task_loss(clf, 0, ctask, LossKind::cross_entropy) ==
        doctest::Approx(std::log(double(c))).epsilon(1e-15));
}

TEST_CASE("task_loss matches the scalar oracle on random instances") {
  auto rng = make_rng(55);
  for (const bool mlp : {false, true}) {
    for (const LossKind kind : {LossKind::square, LossKind::cross_entropy}) {
      for (int rep = 0; rep < 10; ++rep) {
        const auto inst = random_instance(rng, mlp, kind);
        const double got = task_loss(inst.model, inst.task, inst.batch, kind);
        const double expect = oracle_loss(inst.model, inst.task, inst.batch, kind);
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
        CHECK(got >= 0.0);
      }
    }
  }
}

TEST_CASE("task_loss: rejects incompatible loss kinds and NaN parameters") {
  const MultiTaskModel reg = MultiTaskModel::linear(2, 1, 1, 3);
  TaskData task;
  task.features = Eigen::MatrixXd::Random(3, 2);
  task.labels = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(task_loss(reg, 0, task, LossKind::cross_entropy), ValidationError);

  MultiTaskModel nan_model = MultiTaskModel::linear(2, 1, 1, 3);
  nan_model.heads[0].weight(0, 0) = std::nan("");
  CHECK_THROWS_AS(task_loss(nan_model, 0, task, LossKind::square), NumericError);
}

TEST_CASE("task_gradient: loss value equals task_loss bit for bit") {
  auto rng = make_rng(808);
  for (const bool mlp : {false, true}) {
    for (const LossKind kind : {LossKind::square, LossKind::cross_entropy}) {
      const auto inst = random_instance(rng, mlp, kind);
      const auto [loss, grad] =
          task_gradient(inst.model, inst.task, inst.batch, kind);
      CHECK(loss == task_loss(inst.model, inst.task, inst.batch, kind));
      (void)grad;
    }
  }
}

TEST_CASE("task_gradient: zero at an interpolating linear model") {
  MultiTaskModel model = MultiTaskModel::linear(3, 1, 1, 3);
  model.heads[0].weight << 0.5, -1.0, 2.0;
  model.heads[0].bias[0] = 0.25;
  TaskData task;
  task.features = Eigen::MatrixXd::Random(8, 3);
  task.labels = (task.features * model.heads[0].weight).col(0).array() + 0.25;
  const auto [loss, grad] = task_gradient(model, 0, task, LossKind::square);
  CHECK(loss <= 1e-28);
  CHECK(grad.head_grad.weight.lpNorm<Eigen::Infinity>() <= 1e-13);
  CHECK(grad.head_grad.bias.lpNorm<Eigen::Infinity>() <= 1e-13);
}

TEST_CASE("task_gradient matches central finite differences") {
  auto rng = make_rng(31337);
  const double step = 1e-5;
  for (const bool mlp : {false, true}) {
    for (const LossKind kind : {LossKind::square, LossKind::cross_entropy}) {
      for (int rep = 0; rep < 10; ++rep) {
        auto inst = random_instance(rng, mlp, kind);
        const auto [loss, grad] =
            task_gradient(inst.model, inst.task, inst.batch, kind);
        (void)loss;
        const auto analytic = flatten_gradient(inst.model, grad);
        const auto numeric = finite_difference_gradient(inst.model, inst.task,
                                                        inst.batch, kind, step);
        REQUIRE(analytic.size() == numeric.size());
        for (std::size_t i = 0; i < analytic.size(); ++i) {
          const double scale =
              std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
          CHECK(std::abs(analytic[i] - numeric[i]) / scale <= 1e-4);
        }
      }
    }
  }
}

TEST_CASE("task_gradient: cross-entropy logit gradient is softmax minus one-hot") {
  auto rng = make_rng(99);
  const auto inst = random_instance(rng, false, LossKind::cross_entropy);
  const auto [loss, grad] =
      task_gradient(inst.model, inst.task, inst.batch, LossKind::cross_entropy);
  (void)loss;

  // For the linear model, d(loss)/d(bias) is the batch-averaged logit
  // gradient, which the softmax identity pins down in closed form.
  const Eigen::MatrixXd logits = forward(inst.model, inst.task, inst.batch.features);
  const auto n = logits.rows();
  Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(logits.cols());
  for (Eigen::Index j = 0; j < n; ++j) {
    const double zmax = logits.row(j).maxCoeff();
    Eigen::RowVectorXd softmax = (logits.row(j).array() - zmax).exp();
    softmax /= softmax.sum();
    softmax[static_cast<Eigen::Index>(inst.batch.labels[j])] -= 1.0;
    expect += softmax;
  }
  expect /= static_cast<double>(n);
  CHECK((grad.head_grad.bias.transpose() - expect).lpNorm<Eigen::Infinity>() <=
        1e-12);
}

TEST_CASE("l2_regularizer") {
  MultiTaskModel model = MultiTaskModel::linear(1, 1, 1, 1);
  model.heads[0].weight(0, 0) = 3.0;
  model.heads[0].bias[0] = 0.0;

  auto [zero_value, zero_grad] = l2_regularizer(model, 0.0);
  CHECK(zero_value == 0.0);
  CHECK(zero_grad.heads[0].weight(0, 0) == 0.0);

  auto [value, grad] = l2_regularizer(model, 1.0);
  CHECK(value == 9.0);
  CHECK(grad.heads[0].weight(0, 0) == 6.0);

  // Finite-difference agreement on the value.
  const double step = 1e-6;
  MultiTaskModel probe = model;
  probe.heads[0].weight(0, 0) += step;
  const double up = l2_regularizer(probe, 1.0).first;
  probe.heads[0].weight(0, 0) -= 2.0 * step;
  const double down = l2_regularizer(probe, 1.0).first;
  CHECK((up - down) / (2.0 * step) == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("linear square loss is midpoint-convex in the parameters") {
  auto rng = make_rng(4242);
  std::normal_distribution<double> normal(0.0, 1.0);
  TaskData task;
  task.features = Eigen::MatrixXd::Random(12, 4);
  task.labels = Eigen::VectorXd::Random(12);
  for (int rep = 0; rep < 200; ++rep) {
    MultiTaskModel a = MultiTaskModel::linear(4, 1, 1, 0);
    MultiTaskModel b = MultiTaskModel::linear(4, 1, 1, 0);
    MultiTaskModel mid = MultiTaskModel::linear(4, 1, 1, 0);
    for (Eigen::Index i = 0; i < 4; ++i) {
      a.heads[0].weight(i, 0) = normal(rng);
      b.heads[0].weight(i, 0) = normal(rng);
      mid.heads[0].weight(i, 0) =
          0.5 * (a.heads[0].weight(i, 0) + b.heads[0].weight(i, 0));
    }
    a.heads[0].bias[0] = normal(rng);
    b.heads[0].bias[0] = normal(rng);
    mid.heads[0].bias[0] = 0.5 * (a.heads[0].bias[0] + b.heads[0].bias[0]);
    const double la = task_loss(a, 0, task, LossKind::square);
    const double lb = task_loss(b, 0, task, LossKind::square);
    const double lmid = task_loss(mid, 0, task, LossKind::square);
    CHECK(lmid <= 0.5 * (la + lb) + 1e-9);
  }
}

TEST_CASE("determinism: identical inputs give identical losses and gradients") {
  auto rng = make_rng(606);
  const auto inst = random_instance(rng, true, LossKind::square);
  const auto [la, ga] =
      task_gradient(inst.model, inst.task, inst.batch, LossKind::square);
  const auto [lb, gb] =
      task_gradient(inst.model, inst.task, inst.batch, LossKind::square);
  CHECK(la == lb);
  CHECK(ga.head_grad.weight == gb.head_grad.weight);
  CHECK(ga.shared_grad->weight == gb.shared_grad->weight);
}

TEST_CASE("checkpoint round-trip") {
  const MultiTaskModel model = MultiTaskModel::mlp(4, 6, 3, 2, 77);
  const auto path =
      (std::filesystem::temp_directory_path() / "tb_checkpoint.json").string();
  save_checkpoint(model, path);
  const MultiTaskModel loaded = load_checkpoint(path);
  REQUIRE(loaded.task_count() == 3);
  CHECK(loaded.shared->weight == model.shared->weight);
  CHECK(loaded.shared->bias == model.shared->bias);
  for (int t = 0; t < 3; ++t) {
    CHECK(loaded.heads[t].weight == model.heads[t].weight);
    CHECK(loaded.heads[t].bias == model.heads[t].bias);
  }
}
