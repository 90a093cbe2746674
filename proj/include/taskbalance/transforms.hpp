#pragma once

#include <string>
#include <vector>

namespace taskbalance {

enum class TransformKind { identity, exponential, polynomial };

// Loss transformation h(.) applied to per-task training losses. A useful h is
// nonnegative, monotonically increasing and has a monotonically increasing
// derivative, so that harder tasks (larger losses) receive larger effective
// weights h'(L).
struct TransformSpec {
  TransformKind kind = TransformKind::exponential;
  double temperature = 50.0;          // exponential: h(z) = exp(z/T), T > 0
  std::vector<double> coefficients;   // polynomial: h(z) = sum a_k z^k, a_k >= 0

  static TransformSpec identity();
  static TransformSpec exponential(double temperature);
  static TransformSpec polynomial(std::vector<double> coefficients);

  // Throws ValidationError on out-of-range hyperparameters.
  void check() const;

  std::string name() const;
  bool operator==(const TransformSpec&) const = default;
};

// h(z) for z >= 0. Throws DomainError for z < 0 and OverflowError when the
// exponential argument exceeds 700.
double h_value(const TransformSpec& spec, double z);

// h'(z) under the same domain/overflow rules as h_value.
double h_derivative(const TransformSpec& spec, double z);

// Largest argument h can take before the exponential overflows; +inf for
// transforms that never overflow. Strategies clamp losses at this value
// instead of aborting a run on a single divergent batch.
double overflow_limit(const TransformSpec& spec);

struct ValidityViolation {
  std::string condition;  // e.g. "h_derivative_strictly_increasing"
  double witness;         // grid point where the condition first fails
};

struct ValidityReport {
  bool satisfied = false;
  std::vector<ValidityViolation> violations;
};

// Numeric check of the conditions a transform must satisfy, on a uniform grid
// over [0, grid_max]: h(0) >= 0, h'(0) >= 0, h strictly increasing, and h'
// strictly increasing (finite surrogate for strong convexity). Certifies only
// the inspected range.
ValidityReport validate_transform(const TransformSpec& spec, double grid_max,
                                  int grid_points);

}  // namespace taskbalance
