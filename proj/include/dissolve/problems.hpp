#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dissolve/penalty.hpp"

namespace dissolve {

enum class Family { npca, qpb, fpca };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

/// Nonnegative sparse PCA: min -||B^T x||^2 / 2 + rho 1^T x  s.t. ||x|| = 1, x >= 0.
struct NpcaData {
  Matrix B;  // n x m_cols, spectral norm m_cols
  double rho = 0.0;
};

/// Nonconvex QP over the unit ball: min x^T Q x / 2 + q^T x  s.t. ||x - d|| = 1, ||x|| <= 1.
struct QpbData {
  Matrix Q;
  Vector q;
  Vector d;
  double edge_density = 0.5;
};

/// Fair PCA in epigraph form over (P, y, z) with P flattened column-major.
struct FpcaData {
  std::vector<Matrix> groups;  // A_i, each n x n
  Index rank = 0;              // d
  Vector top_energy;           // squared norm of the best rank-d approximation of each A_i
};

struct ProblemInstance {
  Family family = Family::npca;
  Index n = 0;
  std::uint64_t seed = 0;
  std::variant<NpcaData, QpbData, FpcaData> data;
  Vector x0;
  double beta = 0.0;
  MapMode map_mode = MapMode::closed_form;

  /// Length of the optimization variable.
  Index dim() const;
  /// Family-specific dimensions, e.g. "cols=50" or "k=2;d=3".
  std::string extra_dims() const;
};

struct GeneratedProblem {
  ProblemInstance instance;
  PenaltyProblem problem;
};

GeneratedProblem gen_npca(Index n, Index m_cols, double rho, std::uint64_t seed, double beta = 100.0);
GeneratedProblem gen_qpb(Index n, double edge_density, std::uint64_t seed, double beta = 10.0,
                         MapMode mode = MapMode::generic_analytic);
GeneratedProblem gen_fpca(Index n, Index k, Index d, std::uint64_t seed, double beta = 1.0,
                          MapMode mode = MapMode::generic_analytic);

/// Rebuilds the penalty problem from the instance data, optionally with another beta.
PenaltyProblem build_problem(const ProblemInstance& instance, std::optional<double> beta = std::nullopt);

/// Per-group fair PCA losses (-<A_i^T A_i, P P^T> + ||A_i hat||^2) / n and their maximum.
Vector fpca_group_losses(const FpcaData& data, Index n, const Matrix& P);
double fpca_objective(const FpcaData& data, Index n, const Matrix& P);

/// Points of K = {x in X : c(x) = 0} drawn from a family-specific sampler.
std::vector<Vector> feasible_points(const ProblemInstance& instance, int count, std::uint64_t seed);

/// Feasible points moved by a random perturbation of the given radius, then pulled into the
/// relative interior of X by `margin` so that finite differences stay inside X.
std::vector<Vector> neighborhood_points(const ProblemInstance& instance, int count,
                                        std::uint64_t seed, double radius = 1e-2,
                                        double margin = 1e-2);

/// Brute-force optimum for tiny instances: NPCA with n <= 3, QPB with n = 2.
double reference_small_oracle(const ProblemInstance& instance);

nlohmann::json instance_to_json(const ProblemInstance& instance);
ProblemInstance instance_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& M);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace dissolve
