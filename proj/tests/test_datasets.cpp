#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "taskbalance/datasets.hpp"
#include "taskbalance/errors.hpp"

using namespace taskbalance;

namespace {

SyntheticSpec make_spec(int m, int n, int d, std::vector<double> noise) {
  SyntheticSpec spec;
  spec.task_count = m;
  spec.examples_per_task = n;
  spec.feature_dim = d;
  spec.noise_stddevs = std::move(noise);
  spec.task_relatedness = 0.5;
  return spec;
}

// Ordinary least squares through the normal equations; independent of the
// generator's internals.
Eigen::VectorXd ols_fit(const TaskData& task) {
  const Eigen::MatrixXd& x = task.features;
  return (x.transpose() * x).ldlt().solve(x.transpose() * task.labels);
}

std::string write_temp(const std::string& name, const std::string& contents) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << contents;
  return path.string();
}

}  // namespace

TEST_CASE("gen_synthetic: noiseless tasks admit an exact linear fit") {
  const auto data = gen_synthetic(make_spec(2, 200, 8, {0.0, 0.0}), 99);
  for (const TaskData& task : data.tasks) {
    const Eigen::VectorXd theta = ols_fit(task);
    const double residual = (task.features * theta - task.labels).norm();
    CHECK(residual <= 1e-10);
  }
}

TEST_CASE("gen_synthetic: SARCOS-protocol shape") {
  const auto data =
      gen_synthetic(make_spec(7, 2000, 21, std::vector<double>(7, 0.1)), 3);
  CHECK(data.task_count() == 7);
  CHECK(data.feature_dim == 21);
  for (const TaskData& task : data.tasks) CHECK(task.size() == 2000);
}

TEST_CASE("gen_synthetic: OLS recovers the irreducible noise level") {
  // Bayes-optimal test MSE for the generator is noise^2; a large-sample OLS
  // fit must land within 5%.
  const double sigma = 0.7;
  const auto data = gen_synthetic(make_spec(1, 20000, 5, {sigma}), 1234);
  auto [train_set, test_set] = split(data, SplitSpec{0.5, 9});
  const Eigen::VectorXd theta = ols_fit(train_set.tasks[0]);
  const TaskData& held_out = test_set.tasks[0];
  const double mse =
      (held_out.features * theta - held_out.labels).squaredNorm() / held_out.size();
  CHECK(mse == doctest::Approx(sigma * sigma).epsilon(0.05));
}

TEST_CASE("gen_synthetic: deterministic per (spec, seed)") {
  const auto spec = make_spec(3, 50, 4, {0.1, 0.2, 0.3});
  const auto a = gen_synthetic(spec, 7);
  const auto b = gen_synthetic(spec, 7);
  const auto c = gen_synthetic(spec, 8);
  for (int t = 0; t < 3; ++t) {
    CHECK(a.tasks[t].features == b.tasks[t].features);
    CHECK(a.tasks[t].labels == b.tasks[t].labels);
  }
  CHECK(a.tasks[0].labels != c.tasks[0].labels);
}

TEST_CASE("gen_synthetic: feature rows have unit norm") {
  const auto data = gen_synthetic(make_spec(2, 40, 6, {0.0, 0.0}), 5);
  for (const TaskData& task : data.tasks)
    for (Eigen::Index j = 0; j < task.size(); ++j)
      CHECK(task.features.row(j).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gen_synthetic: classification labels lie in range") {
  SyntheticSpec spec = make_spec(2, 500, 6, {0.0, 0.4});
  spec.kind = TaskKind::classification;
  spec.num_classes = 3;
  const auto data = gen_synthetic(spec, 11);
  CHECK(data.num_classes == 3);
  for (const TaskData& task : data.tasks)
    for (Eigen::Index j = 0; j < task.size(); ++j) {
      CHECK(task.labels[j] >= 0.0);
      CHECK(task.labels[j] <= 2.0);
    }
}

TEST_CASE("gen_synthetic: invalid specs are rejected") {
  CHECK_THROWS_AS(gen_synthetic(make_spec(0, 10, 3, {}), 1), ValidationError);
  CHECK_THROWS_AS(gen_synthetic(make_spec(1, 10, 3, {-0.1}), 1), ValidationError);
  auto bad = make_spec(1, 10, 3, {0.1});
  bad.task_relatedness = 1.5;
  CHECK_THROWS_AS(gen_synthetic(bad, 1), ValidationError);
}

TEST_CASE("load_multioutput_csv: column split") {
  const auto path = write_temp("tb_csv_basic.csv",
                               "1 2 10 20\n"
                               "3 4 30 40\n"
                               "5 6 50 60\n");
  const auto data = load_multioutput_csv(path, 2, 2);
  REQUIRE(data.task_count() == 2);
  CHECK(data.feature_dim == 2);
  CHECK(data.tasks[0].size() == 3);
  CHECK(data.tasks[0].features == data.tasks[1].features);
  CHECK(data.tasks[0].labels[1] == 30.0);
  CHECK(data.tasks[1].labels[2] == 60.0);
  CHECK(data.tasks[0].features(2, 1) == 6.0);
}

TEST_CASE("load_multioutput_csv: comma-delimited parses identically") {
  const auto ws = write_temp("tb_csv_ws.csv", "1 2 3\n4 5 6\n");
  const auto comma = write_temp("tb_csv_comma.csv", "1,2,3\n4,5,6\n");
  const auto a = load_multioutput_csv(ws, 2, 1);
  const auto b = load_multioutput_csv(comma, 2, 1);
  CHECK(a.tasks[0].features == b.tasks[0].features);
  CHECK(a.tasks[0].labels == b.tasks[0].labels);
}

TEST_CASE("load_multioutput_csv: header row is a parse error at line 1") {
  const auto path = write_temp("tb_csv_header.csv", "f1 f2 y\n1 2 3\n");
  try {
    load_multioutput_csv(path, 2, 1);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
}

TEST_CASE("load_multioutput_csv: malformed row reports its line") {
  const auto path = write_temp("tb_csv_bad.csv", "1 2 3\n4 x 6\n");
  try {
    load_multioutput_csv(path, 2, 1);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("load_multioutput_csv: ragged row reports its line") {
  const auto path = write_temp("tb_csv_ragged.csv", "1 2 3\n4 5\n");
  try {
    load_multioutput_csv(path, 2, 1);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("load_multioutput_csv: subsample") {
  std::string contents;
  for (int i = 0; i < 50; ++i)
    contents += std::to_string(i) + " " + std::to_string(2 * i) + "\n";
  const auto path = write_temp("tb_csv_sub.csv", contents);
  const auto data = load_multioutput_csv(path, 1, 1, 20, 42);
  CHECK(data.tasks[0].size() == 20);
  const auto again = load_multioutput_csv(path, 1, 1, 20, 42);
  CHECK(data.tasks[0].features == again.tasks[0].features);
  CHECK_THROWS_AS(load_multioutput_csv(path, 1, 1, 51, 42), ValidationError);
}

TEST_CASE("split: sizes and determinism") {
  const auto data = gen_synthetic(make_spec(2, 10, 3, {0.0, 0.0}), 21);

  auto [train_half, test_half] = split(data, SplitSpec{0.5, 17});
  CHECK(train_half.tasks[0].size() == 5);
  CHECK(test_half.tasks[0].size() == 5);

  auto [train70, test70] = split(data, SplitSpec{0.7, 17});
  CHECK(train70.tasks[0].size() == 7);
  CHECK(test70.tasks[0].size() == 3);

  auto [train_b, test_b] = split(data, SplitSpec{0.7, 17});
  CHECK(train70.tasks[0].features == train_b.tasks[0].features);
  CHECK(test70.tasks[1].labels == test_b.tasks[1].labels);
}

TEST_CASE("split: partition property") {
  const auto data = gen_synthetic(make_spec(3, 37, 4, {0.1, 0.2, 0.3}), 90);
  auto [train_set, test_set] = split(data, SplitSpec{0.6, 5});
  for (int t = 0; t < 3; ++t) {
    // Labels are continuous draws, so multisets of labels identify rows.
    std::multiset<double> original, recombined;
    for (Eigen::Index j = 0; j < data.tasks[t].size(); ++j)
      original.insert(data.tasks[t].labels[j]);
    for (Eigen::Index j = 0; j < train_set.tasks[t].size(); ++j)
      recombined.insert(train_set.tasks[t].labels[j]);
    for (Eigen::Index j = 0; j < test_set.tasks[t].size(); ++j)
      recombined.insert(test_set.tasks[t].labels[j]);
    CHECK(original == recombined);
  }
}

TEST_CASE("split: rejects splits that empty a side") {
  const auto data = gen_synthetic(make_spec(1, 3, 2, {0.0}), 1);
  CHECK_THROWS_AS(split(data, SplitSpec{0.05, 1}), ValidationError);
  CHECK_THROWS_AS(split(data, SplitSpec{0.95, 1}), ValidationError);
  CHECK_THROWS_AS(split(data, SplitSpec{1.5, 1}), ValidationError);
}

TEST_CASE("minibatches: slice sizes and partition") {
  TaskData task;
  task.features = Eigen::MatrixXd::Zero(5, 2);
  task.labels = Eigen::VectorXd::Zero(5);
  const auto slices = minibatches(task, 2, 7);
  REQUIRE(slices.size() == 3);
  CHECK(slices[0].size() == 2);
  CHECK(slices[1].size() == 2);
  CHECK(slices[2].size() == 1);

  std::vector<Eigen::Index> all;
  for (const auto& s : slices) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end());
  std::vector<Eigen::Index> expect(5);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
}

TEST_CASE("minibatches: batch 32 over 64 rows gives two full slices") {
  TaskData task;
  task.features = Eigen::MatrixXd::Zero(64, 1);
  task.labels = Eigen::VectorXd::Zero(64);
  const auto slices = minibatches(task, 32, 123);
  REQUIRE(slices.size() == 2);
  CHECK(slices[0].size() == 32);
  CHECK(slices[1].size() == 32);
}

TEST_CASE("minibatches: oversized batch yields one full slice") {
  TaskData task;
  task.features = Eigen::MatrixXd::Zero(3, 1);
  task.labels = Eigen::VectorXd::Zero(3);
  const auto slices = minibatches(task, 10, 0);
  REQUIRE(slices.size() == 1);
  CHECK(slices[0].size() == 3);
}

TEST_CASE("standardizer: train split becomes zero mean unit variance") {
  const auto data = gen_synthetic(make_spec(2, 400, 3, {0.5, 0.5}), 77);
  auto [train_set, test_set] = split(data, SplitSpec{0.5, 7});
  const Standardizer stats = fit_standardizer(train_set);
  apply_standardizer(stats, train_set);
  apply_standardizer(stats, test_set);
  for (const TaskData& task : train_set.tasks) {
    CHECK(std::abs(task.labels.mean()) <= 1e-9);
    const double var = (task.labels.array() - task.labels.mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
}
