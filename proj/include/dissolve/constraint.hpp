#pragma once

#include <functional>

#include "dissolve/types.hpp"

namespace dissolve {

/// Smooth equality constraint c : R^n -> R^p. The Jacobian convention is transposed:
/// jacobian(x) is n x p with column i equal to the gradient of c_i.
struct ConstraintMap {
  using ValueFn = std::function<Vector(const Vector&)>;
  using ProductFn = std::function<Vector(const Vector&, const Vector&)>;
  using HessFn = std::function<Vector(const Vector&, const Vector&, const Vector&)>;

  Index n = 0;
  Index p = 0;
  ValueFn value;
  /// (x, v in R^p) -> grad c(x) v in R^n.
  ProductFn jac_t_apply;
  /// (x, d in R^n) -> grad c(x)^T d in R^p.
  ProductFn jac_apply;
  /// (x, lambda, d) -> sum_i lambda_i hess c_i(x) d. Optional.
  HessFn hess_apply;

  bool has_hessian() const { return static_cast<bool>(hess_apply); }
  Matrix jacobian(const Vector& x) const;
};

ConstraintMap no_constraints(Index n);

/// c(x) = x^T H x - 1 with H symmetric.
ConstraintMap sphere_constraint(Matrix H);

/// c(x) = ||x - center||^2 - radius^2.
ConstraintMap shifted_sphere_constraint(Vector center, double radius = 1.0);

/// c(x) = sum_i |x_i|^q - 1.
ConstraintMap lq_sphere_constraint(Index n, double exponent);

/// c(X) = diag(X) - 1 for a column-major size x size matrix X.
ConstraintMap unit_diagonal_constraint(Index size);

/// c_j(X) = ||X e_j||^2 - 1 for a column-major rows x cols matrix X.
ConstraintMap unit_column_constraint(Index rows, Index cols);

/// c(x) = A^T x - b with A of size n x p.
ConstraintMap affine_constraint(Matrix A, Vector b);

}  // namespace dissolve
