#include "taskbalance/balancers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "taskbalance/errors.hpp"

namespace taskbalance {

void TaskWeights::check() const {
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (!(weights[i] >= 0.0)) throw ValidationError("task weight is negative");
  const double sum = weights.sum();
  const auto m = static_cast<double>(weights.size());
  if (normalization == Normalization::sum_to_m && std::abs(sum - m) > 1e-9)
    throw ValidationError("weights declared sum_to_m do not sum to m");
  if (normalization == Normalization::sum_to_1 && std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("weights declared sum_to_1 do not sum to 1");
}

StrategyKind StrategyKind::direct_sum() { return {}; }

StrategyKind StrategyKind::fixed(std::vector<double> weights) {
  StrategyKind kind;
  kind.id = StrategyId::fixed;
  kind.fixed_weights = std::move(weights);
  return kind;
}

StrategyKind StrategyKind::dwa(double temperature) {
  StrategyKind kind;
  kind.id = StrategyId::dwa;
  kind.dwa_temperature = temperature;
  return kind;
}

StrategyKind StrategyKind::maximum() {
  StrategyKind kind;
  kind.id = StrategyId::maximum;
  return kind;
}

StrategyKind StrategyKind::soft_maximum() {
  StrategyKind kind;
  kind.id = StrategyId::soft_maximum;
  return kind;
}

StrategyKind StrategyKind::curriculum(double temperature) {
  StrategyKind kind;
  kind.id = StrategyId::curriculum;
  kind.curriculum_temperature = temperature;
  return kind;
}

StrategyKind StrategyKind::bmtl(TransformSpec transform) {
  StrategyKind kind;
  kind.id = StrategyId::bmtl;
  kind.transform = std::move(transform);
  return kind;
}

StrategyKind StrategyKind::mgda() {
  StrategyKind kind;
  kind.id = StrategyId::mgda;
  return kind;
}

void StrategyKind::check() const {
  switch (id) {
    case StrategyId::fixed:
      if (fixed_weights.empty())
        throw ValidationError("fixed strategy needs a weight per task");
      for (double w : fixed_weights)
        if (!(w > 0.0)) throw ValidationError("fixed weights must be positive");
      return;
    case StrategyId::dwa:
      if (!(dwa_temperature > 0.0))
        throw ValidationError("dwa temperature must be positive");
      return;
    case StrategyId::curriculum:
      if (!(curriculum_temperature > 0.0))
        throw ValidationError("curriculum temperature must be positive");
      return;
    case StrategyId::bmtl:
      transform.check();
      return;
    default:
      return;
  }
}

std::string StrategyKind::name() const {
  std::ostringstream out;
  switch (id) {
    case StrategyId::direct_sum:
      return "direct_sum";
    case StrategyId::fixed: {
      out << "fixed(";
      for (std::size_t i = 0; i < fixed_weights.size(); ++i) {
        if (i) out << ",";
        out << fixed_weights[i];
      }
      out << ")";
      return out.str();
    }
    case StrategyId::dwa:
      out << "dwa(T=" << dwa_temperature << ")";
      return out.str();
    case StrategyId::maximum:
      return "maximum";
    case StrategyId::soft_maximum:
      return "soft_maximum";
    case StrategyId::curriculum:
      out << "curriculum(T=" << curriculum_temperature << ")";
      return out.str();
    case StrategyId::bmtl:
      return "bmtl[" + transform.name() + "]";
    case StrategyId::mgda:
      return "mgda";
  }
  return "unknown";
}

double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() == 0) throw ValidationError("logsumexp of an empty vector");
  const double zmax = z.maxCoeff();
  if (!std::isfinite(zmax)) return zmax;
  return zmax + std::log((z.array() - zmax).exp().sum());
}

namespace {

Eigen::VectorXd stable_softmax(const Eigen::VectorXd& z) {
  const double zmax = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - zmax).exp();
  return e / e.sum();
}

void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string(what) + " contains NaN/Inf");
}

const Eigen::VectorXd& require_history(const LossRecord& record,
                                       const std::optional<Eigen::VectorXd>& slot,
                                       const char* strategy, const char* name) {
  if (!slot)
    throw StateError(std::string(strategy) + " needs loss history slot " + name);
  if (slot->size() != record.current.size())
    throw ValidationError("loss history length mismatch");
  require_finite(*slot, name);
  return *slot;
}

}  // namespace

TaskWeights compute_weights(const StrategyKind& kind, const LossRecord& record,
                            std::vector<std::string>* warnings) {
  kind.check();
  const auto m = record.current.size();
  if (m == 0) throw ValidationError("loss record is empty");
  require_finite(record.current, "current losses");

  TaskWeights out;
  out.weights.resize(m);

  switch (kind.id) {
    case StrategyId::direct_sum:
      out.weights.setOnes();
      out.normalization = TaskWeights::Normalization::none;
      break;

    case StrategyId::fixed:
      if (static_cast<Eigen::Index>(kind.fixed_weights.size()) != m)
        throw ValidationError("fixed weight count does not match task count");
      for (Eigen::Index i = 0; i < m; ++i)
        out.weights[i] = kind.fixed_weights[static_cast<std::size_t>(i)];
      out.normalization = TaskWeights::Normalization::none;
      break;

    case StrategyId::dwa: {
      const auto& prev1 = require_history(record, record.prev1, "dwa", "prev1");
      const auto& prev2 = require_history(record, record.prev2, "dwa", "prev2");
      Eigen::VectorXd exponents(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        // Descent ratio L(t-1)/L(t-2); a task already at zero loss gets the
        // neutral ratio 1.
        const double ratio = prev2[i] > 0.0 ? prev1[i] / prev2[i] : 1.0;
        exponents[i] = ratio / kind.dwa_temperature;
      }
      out.weights = static_cast<double>(m) * stable_softmax(exponents);
      out.normalization = TaskWeights::Normalization::sum_to_m;
      break;
    }

    case StrategyId::maximum: {
      // Subgradient of max_i L_i: mass on the argmax, split evenly over ties.
      const double top = record.current.maxCoeff();
      out.weights.setZero();
      int ties = 0;
      for (Eigen::Index i = 0; i < m; ++i)
        if (record.current[i] == top) ++ties;
      for (Eigen::Index i = 0; i < m; ++i)
        if (record.current[i] == top) out.weights[i] = 1.0 / ties;
      out.normalization = TaskWeights::Normalization::sum_to_1;
      break;
    }

    case StrategyId::soft_maximum:
      // Exact gradient coefficients of log sum exp(L_i).
      out.weights = stable_softmax(record.current);
      out.normalization = TaskWeights::Normalization::sum_to_1;
      break;

    case StrategyId::curriculum: {
      const Eigen::VectorXd& basis = record.prev1 ? *record.prev1 : record.current;
      if (basis.size() != m) throw ValidationError("loss history length mismatch");
      require_finite(basis, "prev1");
      out.weights = static_cast<double>(m) *
                    stable_softmax(-basis / kind.curriculum_temperature);
      out.normalization = TaskWeights::Normalization::sum_to_m;
      break;
    }

    case StrategyId::bmtl: {
      const double limit = overflow_limit(kind.transform);
      for (Eigen::Index i = 0; i < m; ++i) {
        double z = record.current[i];
        if (z > limit) {
          if (warnings) {
            std::ostringstream msg;
            msg << "bmtl: loss " << z << " for task " << i
                << " clamped at transform overflow limit " << limit;
            warnings->push_back(msg.str());
          }
          z = limit;
        }
        out.weights[i] = h_derivative(kind.transform, z);
      }
      out.normalization = TaskWeights::Normalization::none;
      break;
    }

    case StrategyId::mgda:
      throw StateError("mgda weights require gradients; use solve_min_norm");
  }

  out.check();
  return out;
}

MinNormResult solve_min_norm(const std::vector<Eigen::VectorXd>& grads) {
  const auto m = static_cast<Eigen::Index>(grads.size());
  if (m == 0) throw ValidationError("solve_min_norm needs at least one gradient");
  const auto dim = grads[0].size();
  for (const auto& g : grads) {
    if (g.size() != dim) throw ValidationError("gradient lengths differ");
    if (!g.allFinite()) throw NumericError("gradient contains NaN/Inf");
  }

  MinNormResult result;
  result.alpha.normalization = TaskWeights::Normalization::sum_to_1;

  if (m == 1) {
    result.alpha.weights = Eigen::VectorXd::Ones(1);
    result.direction = grads[0];
    result.min_norm = result.direction.norm();
    result.alpha.check();
    return result;
  }

  // Gram matrix: the objective alpha' M alpha only needs pairwise products.
  Eigen::MatrixXd gram(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i; j < m; ++j) gram(i, j) = gram(j, i) = grads[i].dot(grads[j]);

  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  constexpr int kMaxIterations = 200;
  constexpr double kGapTolerance = 1e-8;

  auto duality_gap = [&](const Eigen::VectorXd& a) {
    const Eigen::VectorXd gram_a = gram * a;
    return 2.0 * (a.dot(gram_a) - gram_a.minCoeff());
  };

  int iter = 0;
  for (; iter < kMaxIterations; ++iter) {
    const Eigen::VectorXd gram_alpha = gram * alpha;
    Eigen::Index best = 0;
    gram_alpha.minCoeff(&best);
    if (2.0 * (alpha.dot(gram_alpha) - gram_alpha[best]) <= kGapTolerance) break;

    // Exact line search from alpha toward the best vertex e_best.
    Eigen::VectorXd step = -alpha;
    step[best] += 1.0;
    const double curvature = step.dot(gram * step);
    if (curvature <= 0.0) break;  // direction does not change G*alpha
    const double gamma = std::clamp(-alpha.dot(gram * step) / curvature, 0.0, 1.0);
    if (gamma == 0.0) break;
    alpha += gamma * step;
    // Exact simplex projection against rounding drift.
    alpha = alpha.cwiseMax(0.0);
    alpha /= alpha.sum();
  }

  result.alpha.weights = alpha;
  result.duality_gap = std::max(duality_gap(alpha), 0.0);
  result.iterations = iter;
  result.direction = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < m; ++i) result.direction += alpha[i] * grads[i];
  result.min_norm = result.direction.norm();
  result.alpha.check();
  return result;
}

MgdaDirection mgda_step_direction(const std::vector<GradientPair>& grads) {
  if (grads.empty()) throw ValidationError("mgda needs at least one gradient pair");
  for (const auto& g : grads)
    if (!g.shared_grad)
      throw ConfigError("mgda requires shared parameters; the pure linear model has none");

  // Flatten each task's shared gradient (weight, then bias).
  const auto rows = grads[0].shared_grad->weight.rows();
  const auto cols = grads[0].shared_grad->weight.cols();
  const auto bias_len = grads[0].shared_grad->bias.size();
  const auto dim = rows * cols + bias_len;

  std::vector<Eigen::VectorXd> flat;
  flat.reserve(grads.size());
  double max_norm = 0.0;
  for (const auto& g : grads) {
    if (g.shared_grad->weight.rows() != rows || g.shared_grad->weight.cols() != cols ||
        g.shared_grad->bias.size() != bias_len)
      throw ValidationError("shared gradient shapes differ between tasks");
    Eigen::VectorXd v(dim);
    v.head(rows * cols) =
        Eigen::Map<const Eigen::VectorXd>(g.shared_grad->weight.data(), rows * cols);
    v.tail(bias_len) = g.shared_grad->bias;
    max_norm = std::max(max_norm, v.norm());
    flat.push_back(std::move(v));
  }

  MinNormResult qp = solve_min_norm(flat);

  MgdaDirection out;
  out.alpha = qp.alpha;
  out.min_norm = qp.min_norm;
  out.terminated = qp.min_norm <= std::max(1e-9 * max_norm, 1e-12);
  out.shared_direction.weight =
      Eigen::Map<const Eigen::MatrixXd>(qp.direction.data(), rows, cols);
  out.shared_direction.bias = qp.direction.tail(bias_len);
  out.head_directions.reserve(grads.size());
  for (const auto& g : grads) out.head_directions.push_back(g.head_grad);
  return out;
}

}  // namespace taskbalance
