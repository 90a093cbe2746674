#include "taskbalance/transforms.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "taskbalance/errors.hpp"

namespace taskbalance {

namespace {
constexpr double kExpArgLimit = 700.0;  // exp(709.78...) is the double limit
}

TransformSpec TransformSpec::identity() {
  TransformSpec spec;
  spec.kind = TransformKind::identity;
  return spec;
}

TransformSpec TransformSpec::exponential(double temperature) {
  TransformSpec spec;
  spec.kind = TransformKind::exponential;
  spec.temperature = temperature;
  return spec;
}

TransformSpec TransformSpec::polynomial(std::vector<double> coefficients) {
  TransformSpec spec;
  spec.kind = TransformKind::polynomial;
  spec.coefficients = std::move(coefficients);
  return spec;
}

void TransformSpec::check() const {
  switch (kind) {
    case TransformKind::identity:
      return;
    case TransformKind::exponential:
      if (!(temperature > 0.0))
        throw ValidationError("exponential transform requires temperature > 0");
      return;
    case TransformKind::polynomial:
      if (coefficients.empty())
        throw ValidationError("polynomial transform requires at least one coefficient");
      for (double a : coefficients)
        if (!(a >= 0.0))
          throw ValidationError("polynomial transform requires nonnegative coefficients");
      return;
  }
  throw ValidationError("unknown transform kind");
}

std::string TransformSpec::name() const {
  std::ostringstream out;
  switch (kind) {
    case TransformKind::identity:
      out << "identity";
      break;
    case TransformKind::exponential:
      out << "exp(T=" << temperature << ")";
      break;
    case TransformKind::polynomial: {
      out << "poly(";
      for (std::size_t k = 0; k < coefficients.size(); ++k) {
        if (k) out << ",";
        out << coefficients[k];
      }
      out << ")";
      break;
    }
  }
  return out.str();
}

namespace {

void check_argument(const TransformSpec& spec, double z) {
  if (!(z >= 0.0)) throw DomainError("transform argument must be nonnegative");
  if (spec.kind == TransformKind::exponential && z / spec.temperature > kExpArgLimit)
    throw OverflowError("exponential transform overflow", z, spec.temperature);
}

}  // namespace

double h_value(const TransformSpec& spec, double z) {
  spec.check();
  check_argument(spec, z);
  switch (spec.kind) {
    case TransformKind::identity:
      return z;
    case TransformKind::exponential:
      return std::exp(z / spec.temperature);
    case TransformKind::polynomial: {
      // Horner, highest degree first.
      double acc = 0.0;
      for (auto it = spec.coefficients.rbegin(); it != spec.coefficients.rend(); ++it)
        acc = acc * z + *it;
      return acc;
    }
  }
  throw ValidationError("unknown transform kind");
}

double h_derivative(const TransformSpec& spec, double z) {
  spec.check();
  check_argument(spec, z);
  switch (spec.kind) {
    case TransformKind::identity:
      return 1.0;
    case TransformKind::exponential:
      return std::exp(z / spec.temperature) / spec.temperature;
    case TransformKind::polynomial: {
      double acc = 0.0;
      for (std::size_t k = spec.coefficients.size(); k-- > 1;)
        acc = acc * z + static_cast<double>(k) * spec.coefficients[k];
      return acc;
    }
  }
  throw ValidationError("unknown transform kind");
}

double overflow_limit(const TransformSpec& spec) {
  if (spec.kind == TransformKind::exponential)
    return spec.temperature * kExpArgLimit;
  return std::numeric_limits<double>::infinity();
}

ValidityReport validate_transform(const TransformSpec& spec, double grid_max,
                                  int grid_points) {
  spec.check();
  if (!(grid_max > 0.0)) throw ValidationError("grid_max must be positive");
  if (grid_points < 3) throw ValidationError("grid_points must be at least 3");

  ValidityReport report;
  auto add = [&](const std::string& condition, double witness) {
    report.violations.push_back({condition, witness});
  };

  std::vector<double> grid(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i)
    grid[static_cast<std::size_t>(i)] = grid_max * static_cast<double>(i) / (grid_points - 1);

  if (h_value(spec, 0.0) < 0.0) add("h_nonnegative_at_zero", 0.0);
  if (h_derivative(spec, 0.0) < 0.0) add("h_derivative_nonnegative_at_zero", 0.0);

  // First witness only, per condition.
  for (int i = 1; i < grid_points; ++i) {
    if (!(h_value(spec, grid[i]) > h_value(spec, grid[i - 1]))) {
      add("h_strictly_increasing", grid[i]);
      break;
    }
  }
  for (int i = 1; i < grid_points; ++i) {
    if (!(h_derivative(spec, grid[i]) > h_derivative(spec, grid[i - 1]))) {
      add("h_derivative_strictly_increasing", grid[i]);
      break;
    }
  }

  report.satisfied = report.violations.empty();
  return report;
}

}  // namespace taskbalance
