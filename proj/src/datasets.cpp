#include "taskbalance/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "taskbalance/errors.hpp"
#include "taskbalance/rng.hpp"

namespace taskbalance {

void MultiTaskDataset::check() const {
  if (tasks.empty()) throw ValidationError("dataset has no tasks");
  if (feature_dim <= 0) throw ValidationError("feature_dim must be positive");
  if (kind == TaskKind::classification && num_classes < 2)
    throw ValidationError("classification dataset needs at least 2 classes");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskData& task = tasks[i];
    const std::string where = "task " + std::to_string(i);
    if (task.features.rows() < 1) throw ValidationError(where + " has no examples");
    if (task.features.cols() != feature_dim)
      throw ValidationError(where + " feature width does not match feature_dim");
    if (task.labels.size() != task.features.rows())
      throw ValidationError(where + " label count does not match feature rows");
    if (!task.features.allFinite() || !task.labels.allFinite())
      throw ValidationError(where + " contains non-finite entries");
    if (kind == TaskKind::classification) {
      for (Eigen::Index j = 0; j < task.labels.size(); ++j) {
        const double y = task.labels[j];
        if (y != std::floor(y) || y < 0.0 || y >= num_classes)
          throw ValidationError(where + " label out of {0..c-1}");
      }
    }
  }
}

void SyntheticSpec::check() const {
  if (task_count < 1) throw ValidationError("synthetic spec needs at least one task");
  if (examples_per_task < 1) throw ValidationError("examples_per_task must be >= 1");
  if (feature_dim < 1) throw ValidationError("feature_dim must be >= 1");
  if (static_cast<int>(noise_stddevs.size()) != task_count)
    throw ValidationError("noise_stddevs length must equal task_count");
  for (double s : noise_stddevs)
    if (!(s >= 0.0)) throw ValidationError("noise stddevs must be nonnegative");
  if (!(task_relatedness >= 0.0 && task_relatedness <= 1.0))
    throw ValidationError("task_relatedness must lie in [0,1]");
  if (kind == TaskKind::classification && num_classes < 2)
    throw ValidationError("classification needs at least 2 classes");
}

void SplitSpec::check() const {
  if (!(train_proportion > 0.0 && train_proportion < 1.0))
    throw ValidationError("train_proportion must lie in (0,1)");
}

namespace {

// Stream tags keep RNG streams for distinct purposes decorrelated even when
// the same seed value reaches several call sites.
constexpr std::uint64_t kTruthStream = 0xd1f0;
constexpr std::uint64_t kTaskStreamBase = 0xd1f1;
constexpr std::uint64_t kSubsampleStream = 0x5ab5;
constexpr std::uint64_t kSplitStreamBase = 0x5917;
constexpr std::uint64_t kBatchStream = 0xba7c;

Eigen::VectorXd unit_normal_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

// Blend of the shared direction and a private one, renormalized to unit norm.
Eigen::VectorXd blend_direction(const Eigen::VectorXd& shared,
                                const Eigen::VectorXd& priv, double relatedness) {
  Eigen::VectorXd theta = relatedness * shared + (1.0 - relatedness) * priv;
  const double norm = theta.norm();
  if (norm > 1e-12) theta /= norm;
  return theta;
}

}  // namespace

MultiTaskDataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.check();

  MultiTaskDataset dataset;
  dataset.feature_dim = spec.feature_dim;
  dataset.kind = spec.kind;
  dataset.num_classes = spec.kind == TaskKind::classification ? spec.num_classes : 0;

  const int class_dirs = spec.kind == TaskKind::classification ? spec.num_classes : 1;

  // Ground-truth directions come from a stream that is independent of the
  // per-task data streams, so changing examples_per_task never changes theta*.
  auto truth_rng = make_rng(seed, kTruthStream);
  std::vector<Eigen::VectorXd> shared_dirs;
  shared_dirs.reserve(static_cast<std::size_t>(class_dirs));
  for (int k = 0; k < class_dirs; ++k)
    shared_dirs.push_back(unit_normal_vector(truth_rng, spec.feature_dim));

  dataset.tasks.reserve(static_cast<std::size_t>(spec.task_count));
  for (int t = 0; t < spec.task_count; ++t) {
    std::vector<Eigen::VectorXd> truths;
    truths.reserve(static_cast<std::size_t>(class_dirs));
    for (int k = 0; k < class_dirs; ++k) {
      Eigen::VectorXd priv = unit_normal_vector(truth_rng, spec.feature_dim);
      truths.push_back(blend_direction(shared_dirs[static_cast<std::size_t>(k)], priv,
                                       spec.task_relatedness));
    }

    auto rng = make_rng(seed, kTaskStreamBase + static_cast<std::uint64_t>(t));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    TaskData task;
    task.features.resize(spec.examples_per_task, spec.feature_dim);
    task.labels.resize(spec.examples_per_task);
    const double noise = spec.noise_stddevs[static_cast<std::size_t>(t)];

    for (int j = 0; j < spec.examples_per_task; ++j) {
      Eigen::VectorXd x(spec.feature_dim);
      for (int d = 0; d < spec.feature_dim; ++d) x[d] = normal(rng);
      const double norm = x.norm();
      if (norm > 0.0) x /= norm;
      task.features.row(j) = x.transpose();

      if (spec.kind == TaskKind::regression) {
        task.labels[j] = truths[0].dot(x) + noise * normal(rng);
      } else {
        int best = 0;
        double best_logit = truths[0].dot(x);
        for (int k = 1; k < class_dirs; ++k) {
          const double logit = truths[static_cast<std::size_t>(k)].dot(x);
          if (logit > best_logit) {
            best_logit = logit;
            best = k;
          }
        }
        const double flip_prob = std::min(noise, 1.0);
        if (uniform(rng) < flip_prob && spec.num_classes > 1) {
          // Uniform over the other classes.
          int shift = 1 + static_cast<int>(uniform(rng) * (spec.num_classes - 1));
          shift = std::min(shift, spec.num_classes - 1);
          best = (best + shift) % spec.num_classes;
        }
        task.labels[j] = static_cast<double>(best);
      }
    }
    dataset.tasks.push_back(std::move(task));
  }

  dataset.check();
  return dataset;
}

MultiTaskDataset load_multioutput_csv(const std::string& path, int n_features,
                                      int n_outputs, std::optional<int> subsample,
                                      std::uint64_t seed) {
  if (n_features < 1 || n_outputs < 1)
    throw ValidationError("need at least one feature and one output column");

  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);

  const int width = n_features + n_outputs;
  std::vector<double> values;
  long line_no = 0;
  std::string line;
  long row_count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Commas are treated as whitespace so both delimiters parse identically.
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::vector<double> fields;
    std::string token;
    while (row >> token) {
      std::size_t consumed = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &consumed);
      } catch (const std::exception&) {
        throw ParseError("non-numeric token '" + token + "'", line_no);
      }
      if (consumed != token.size())
        throw ParseError("non-numeric token '" + token + "'", line_no);
      fields.push_back(v);
    }
    if (fields.empty()) continue;  // blank line
    if (static_cast<int>(fields.size()) != width)
      throw ParseError("expected " + std::to_string(width) + " columns, found " +
                           std::to_string(fields.size()),
                       line_no);
    values.insert(values.end(), fields.begin(), fields.end());
    ++row_count;
  }
  if (row_count == 0) throw ValidationError("file has no data rows: " + path);

  std::vector<long> rows(static_cast<std::size_t>(row_count));
  std::iota(rows.begin(), rows.end(), 0L);
  if (subsample) {
    if (*subsample < 1) throw ValidationError("subsample must be >= 1");
    if (*subsample > row_count)
      throw ValidationError("subsample exceeds row count (" +
                            std::to_string(row_count) + ")");
    auto rng = make_rng(seed, kSubsampleStream);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<std::size_t>(*subsample));
    std::sort(rows.begin(), rows.end());
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  MultiTaskDataset dataset;
  dataset.feature_dim = n_features;
  dataset.kind = TaskKind::regression;

  Eigen::MatrixXd features(n, n_features);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto base = static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]) *
                      static_cast<std::size_t>(width);
    for (int d = 0; d < n_features; ++d)
      features(i, d) = values[base + static_cast<std::size_t>(d)];
  }

  dataset.tasks.resize(static_cast<std::size_t>(n_outputs));
  for (int t = 0; t < n_outputs; ++t) {
    TaskData& task = dataset.tasks[static_cast<std::size_t>(t)];
    task.features = features;  // every output task shares the same rows
    task.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto base = static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]) *
                        static_cast<std::size_t>(width);
      task.labels[i] = values[base + static_cast<std::size_t>(n_features + t)];
    }
  }

  dataset.check();
  return dataset;
}

std::pair<MultiTaskDataset, MultiTaskDataset> split(const MultiTaskDataset& dataset,
                                                    const SplitSpec& spec) {
  dataset.check();
  spec.check();

  MultiTaskDataset train = dataset;
  MultiTaskDataset test = dataset;
  train.tasks.clear();
  test.tasks.clear();

  for (std::size_t t = 0; t < dataset.tasks.size(); ++t) {
    const TaskData& task = dataset.tasks[t];
    const auto n = task.size();
    if (n < 2)
      throw ValidationError("task " + std::to_string(t) +
                            " needs at least 2 examples to split");

    // round-half-up keeps the train side stable under tiny proportion jitter.
    const auto n_train = static_cast<Eigen::Index>(
        std::floor(spec.train_proportion * static_cast<double>(n) + 0.5));
    if (n_train < 1 || n_train >= n)
      throw ValidationError("split would leave an empty side for task " +
                            std::to_string(t));

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto rng = make_rng(spec.seed, kSplitStreamBase + static_cast<std::uint64_t>(t));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Eigen::Index> train_rows(order.begin(), order.begin() + n_train);
    std::vector<Eigen::Index> test_rows(order.begin() + n_train, order.end());
    train.tasks.push_back(gather(task, train_rows));
    test.tasks.push_back(gather(task, test_rows));
  }

  return {std::move(train), std::move(test)};
}

std::vector<std::vector<Eigen::Index>> minibatches(const TaskData& task,
                                                   int batch_size,
                                                   std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  const auto n = task.size();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto rng = make_rng(epoch_seed, kBatchStream);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<Eigen::Index>> slices;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const auto stop = std::min<Eigen::Index>(start + batch_size, n);
    slices.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return slices;
}

TaskData gather(const TaskData& task, const std::vector<Eigen::Index>& rows) {
  TaskData out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), task.features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = task.features.row(rows[i]);
    out.labels[static_cast<Eigen::Index>(i)] = task.labels[rows[i]];
  }
  return out;
}

Standardizer fit_standardizer(const MultiTaskDataset& train) {
  train.check();
  const auto d = train.feature_dim;

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(d);
  long total = 0;
  for (const TaskData& task : train.tasks) {
    sum += task.features.colwise().sum().transpose();
    sum_sq += task.features.array().square().colwise().sum().matrix().transpose();
    total += task.size();
  }

  Standardizer stats;
  stats.feature_mean = sum / static_cast<double>(total);
  Eigen::VectorXd var =
      sum_sq / static_cast<double>(total) - stats.feature_mean.array().square().matrix();
  stats.feature_scale.resize(d);
  for (Eigen::Index i = 0; i < d; ++i)
    stats.feature_scale[i] = var[i] > 1e-12 ? std::sqrt(var[i]) : 1.0;

  for (const TaskData& task : train.tasks) {
    if (train.kind == TaskKind::regression) {
      const double mean = task.labels.mean();
      const double var_y = (task.labels.array() - mean).square().mean();
      stats.target_mean.push_back(mean);
      stats.target_scale.push_back(var_y > 1e-12 ? std::sqrt(var_y) : 1.0);
    } else {
      stats.target_mean.push_back(0.0);
      stats.target_scale.push_back(1.0);
    }
  }
  return stats;
}

void apply_standardizer(const Standardizer& stats, MultiTaskDataset& dataset) {
  if (stats.target_mean.size() != dataset.tasks.size())
    throw ValidationError("standardizer was fitted on a different task count");
  for (std::size_t t = 0; t < dataset.tasks.size(); ++t) {
    TaskData& task = dataset.tasks[t];
    task.features = (task.features.rowwise() - stats.feature_mean.transpose()).array()
                        .rowwise() /
                    stats.feature_scale.transpose().array();
    if (dataset.kind == TaskKind::regression)
      task.labels =
          (task.labels.array() - stats.target_mean[t]) / stats.target_scale[t];
  }
}

}  // namespace taskbalance
