#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dissolve/penalty.hpp"
#include "dissolve/rng.hpp"

namespace dissolve {

/// Outcome of a numerical check. passed == (worst_violation <= threshold).
struct CheckReport {
  std::string check_name;
  int samples = 0;
  double worst_violation = 0.0;
  double threshold = 0.0;
  bool passed = true;
  nlohmann::json details = nlohmann::json::array();
  std::vector<std::string> notices;

  nlohmann::json to_json() const;
};

/// Relative error ||a - b|| / max(||a||, ||b||) of h_grad against central differences of
/// h_value at each point.
CheckReport grad_check(const PenaltyProblem& prob, const std::vector<Vector>& points,
                       double threshold = 1e-6);

/// At feasible points checks A(x) = x, grad A(x) grad c(x) = 0 and idempotency of the
/// Jacobian on the affine hull. Each sub-check is divided by its own threshold (1e-10, 1e-8,
/// 1e-6), so the report threshold is 1 and the raw values are in details.
CheckReport assumption_a_check(const DissolvingMap& amap, const ConstraintMap& cmap,
                               const ConvexSet& set, const std::vector<Vector>& feasible_points,
                               std::uint64_t seed = 0, int lambda_samples = 10);

/// r-th largest singular value of P_E grad c(x).
double pi_sigma(const ConstraintMap& cmap, const ConvexSet& set, const Vector& x, Index r);

/// Numerical rank of P_E grad c(x).
Index constraint_rank(const ConstraintMap& cmap, const ConvexSet& set, const Vector& x);

/// Samples y near a feasible x inside aff(X) at radii 1e-1 ... 1e-6 and tests
///   ||P_E grad c(y) c(y)|| >= (pi(x) / 2) ||c(y)||.
/// The report's details hold the largest radius from which the inequality held at all smaller
/// radii; a vanishing pi(x) is reported as a failure at radius 0.
CheckReport local_error_bound_probe(const ConstraintMap& cmap, const ConvexSet& set,
                                    const Vector& x_feasible, int n_samples,
                                    std::uint64_t seed = 0, std::optional<Index> r = std::nullopt);

/// Random point of X: the projection of a scaled standard normal vector.
Vector random_point(const ConvexSet& set, Rng& rng);

/// Q(x) symmetric and PSD, and dq_apply against central differences of q_apply, at random
/// points of X. Violations are normalized by their tolerances (symmetry 1e-12, eigenvalue
/// -1e-10, derivative 1e-6), each relative to max(1, |Q|).
CheckReport q_mapping_check(const ConvexSet& set, int samples, std::uint64_t seed = 0);

}  // namespace dissolve
