#include "taskbalance/bounds.hpp"

#include <cmath>

#include "taskbalance/balancers.hpp"
#include "taskbalance/errors.hpp"

namespace taskbalance {

void BoundInputs::check() const {
  if (!(T > 0.0)) throw ValidationError("T must be positive");
  if (m < 1) throw ValidationError("m must be positive");
  if (n0 < 1) throw ValidationError("n0 must be positive");
  if (!(rho > 0.0)) throw ValidationError("rho must be positive");
  if (!(beta >= 0.0)) throw ValidationError("beta must be nonnegative");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0,1)");
  if (!(empirical_rh >= 0.0))
    throw ValidationError("empirical_rh must be nonnegative");
}

std::pair<double, double> eta_nu(double T, int m, int n0) {
  if (!(T > 0.0)) throw ValidationError("T must be positive");
  if (m < 1 || n0 < 1) throw ValidationError("m and n0 must be positive");
  if (1.0 / T > 700.0)
    throw OverflowError("exp(1/T) overflows", 1.0 / T, T);

  const double exp_inv_t = std::exp(1.0 / T);
  // expm1 keeps precision when 1/(n0*T) is tiny.
  const double eta = (2.0 / static_cast<double>(m)) * exp_inv_t *
                     std::expm1(1.0 / (static_cast<double>(n0) * T));
  const double nu = exp_inv_t / T;
  return {eta, nu};
}

BoundOutputs linear_model_bound(const BoundInputs& inputs) {
  inputs.check();
  BoundOutputs out;
  std::tie(out.eta, out.nu) = eta_nu(inputs.T, inputs.m, inputs.n0);

  const double root_m = std::sqrt(static_cast<double>(inputs.m));
  out.complexity_term = 8.0 * inputs.rho * out.nu * inputs.beta / root_m;
  out.confidence_term =
      std::sqrt(out.eta * out.eta * static_cast<double>(inputs.m) *
                static_cast<double>(inputs.n0) * std::log(1.0 / inputs.delta) / 2.0);
  out.rh_bound = inputs.empirical_rh + out.complexity_term + out.confidence_term;

  if (!(out.rh_bound > 0.0))
    throw DomainError("rh_bound is nonpositive; its logarithm is undefined");
  out.ri_bound = inputs.T * std::log(out.rh_bound);
  out.ri_bound_valid = out.rh_bound >= 1.0;
  return out;
}

std::vector<double> check_lemma1(const std::vector<double>& x_grid) {
  std::vector<double> violations;
  for (double x : x_grid) {
    if (!(x > 0.0)) throw ValidationError("lemma grid points must be positive");
    const double lhs = std::expm1(x) / x;
    const double rhs = std::exp(x / 2.0);
    if (!(lhs >= rhs)) violations.push_back(x);
  }
  return violations;
}

SandwichResult check_softmax_sandwich(const Eigen::VectorXd& z) {
  if (z.size() == 0) throw ValidationError("empty vector");
  if (!z.allFinite()) throw ValidationError("vector must be finite");
  const double max = z.maxCoeff();
  const double lse = logsumexp(z);
  SandwichResult result;
  result.lower_slack = lse - max;
  result.upper_slack = std::log(static_cast<double>(z.size())) + max - lse;
  // Tiny negative slack from rounding would be a genuine failure; the
  // stabilized logsumexp keeps both slacks exactly nonnegative.
  result.pass = result.lower_slack >= 0.0 && result.upper_slack >= 0.0;
  return result;
}

LowerBoundResult check_bmtl_lower_bound(const Eigen::VectorXd& losses, double T) {
  if (!(T > 0.0)) throw ValidationError("T must be positive");
  if (losses.size() == 0) throw ValidationError("empty loss vector");
  for (Eigen::Index i = 0; i < losses.size(); ++i)
    if (!(losses[i] >= 0.0)) throw ValidationError("losses must be nonnegative");

  const double lhs = (losses.array() / T).exp().sum();
  const double rhs = static_cast<double>(losses.size()) + losses.sum() / T;
  LowerBoundResult result;
  result.slack = lhs - rhs;
  result.pass = lhs >= rhs;
  return result;
}

}  // namespace taskbalance
