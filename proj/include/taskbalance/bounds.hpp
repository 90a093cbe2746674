#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

namespace taskbalance {

// Inputs of the high-probability bound for Frobenius-norm-bounded linear
// models with the exponential transform.
struct BoundInputs {
  double T = 50.0;            // transform temperature
  int m = 1;                  // task count
  int n0 = 1;                 // per-task sample count
  double rho = 1.0;           // Lipschitz constant of the loss (user-supplied)
  double beta = 1.0;          // Frobenius-norm budget on the parameters
  double delta = 0.05;        // confidence level, in (0,1)
  double empirical_rh = 0.0;  // empirical transformed loss R^_h

  void check() const;
};

struct BoundOutputs {
  double eta = 0.0;
  double nu = 0.0;
  double complexity_term = 0.0;  // 8*rho*nu*beta/sqrt(m)
  double confidence_term = 0.0;  // sqrt(eta^2*m*n0*ln(1/delta)/2)
  double rh_bound = 0.0;         // empirical_rh + complexity + confidence
  double ri_bound = 0.0;         // T*ln(rh_bound)
  bool ri_bound_valid = false;   // rh_bound >= 1, so ri_bound is nonnegative
};

// eta = (2/m)*exp(1/T)*(exp(1/(n0*T)) - 1); nu = (1/T)*exp(1/T).
// Throws OverflowError when 1/T exceeds the double exponent range.
std::pair<double, double> eta_nu(double T, int m, int n0);

BoundOutputs linear_model_bound(const BoundInputs& inputs);

// Pointwise check of (e^x - 1)/x >= e^{x/2} for x > 0; returns the violating
// grid points (empty iff the inequality holds everywhere on the grid).
std::vector<double> check_lemma1(const std::vector<double>& x_grid);

// max_i z_i <= logsumexp(z) <= ln m + max_i z_i, with both slack values.
struct SandwichResult {
  bool pass = false;
  double lower_slack = 0.0;  // logsumexp - max
  double upper_slack = 0.0;  // ln m + max - logsumexp
};
SandwichResult check_softmax_sandwich(const Eigen::VectorXd& z);

// sum_i exp(L_i/T) >= m + (1/T) sum_i L_i, with its slack.
struct LowerBoundResult {
  bool pass = false;
  double slack = 0.0;
};
LowerBoundResult check_bmtl_lower_bound(const Eigen::VectorXd& losses, double T);

}  // namespace taskbalance
