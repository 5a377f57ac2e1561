#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dissolve/penalty.hpp"

namespace dissolve {

enum class StepRule { fixed, bb_nonmonotone };
enum class SolveStatus { converged, max_iter, line_search_failure, numerical_failure };

std::string to_string(SolveStatus status);
std::string to_string(StepRule rule);

struct BetaSchedule {
  enum class Kind { fixed, continuation };
  Kind kind = Kind::fixed;
  double factor = 10.0;      // beta multiplier on stall
  double stall_ratio = 0.9;  // feas must drop below stall_ratio * feas(window start)
  int window = 100;
};

struct SolverConfig {
  double tol_stat = 1e-6;
  double tol_feas = 1e-6;
  int max_iter = 5000;
  StepRule step_rule = StepRule::bb_nonmonotone;
  /// Step of the fixed rule; <= 0 requests an estimate 1 / L from estimate_lipschitz.
  double eta = 0.0;
  double alpha_min = 1e-10;
  double alpha_max = 1e10;
  int nm_memory = 10;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  int max_backtracks = 50;
  /// Step used when <s, y> <= 0: alpha_max, or the previously accepted step when false.
  bool alpha_max_on_negative_curvature = true;
  /// Upper bound on ||x_trial - x|| (<= 0 disables).
  double max_step_norm = 1.0;
  BetaSchedule beta_schedule;

  void validate() const;
};

struct TraceRecord {
  double h;
  double feas;
  double stat;
  double step;
};

struct SolveResult {
  Vector x_final;
  double f_val = 0.0;  // f(A(x)) at the projection of x_final
  double h_val = 0.0;
  double feas = 0.0;
  double stat = 0.0;
  int iters = 0;
  double wall_time_s = 0.0;
  SolveStatus status = SolveStatus::max_iter;
  double beta_final = 0.0;
  std::vector<TraceRecord> trace;
};

/// x_{k+1} = proj_X(x_k - eta grad h(x_k)).
SolveResult projected_gradient(const PenaltyProblem& prob, const Vector& x0, const SolverConfig& config);

/// Projected gradient with Barzilai-Borwein steps and a non-monotone Armijo line search.
SolveResult pg_bb(const PenaltyProblem& prob, const Vector& x0, const SolverConfig& config);

/// Dispatches on config.step_rule.
SolveResult solve(const PenaltyProblem& prob, const Vector& x0, const SolverConfig& config);

/// ||x - proj_X(x - grad h(x))|| / (1 + ||x||).
double stationarity_measure(const PenaltyProblem& prob, const Vector& x);
double stationarity_from_grad(const ConvexSet& set, const Vector& x, const Vector& grad);

/// ||c(proj_X(x))||.
double feasibility_measure(const PenaltyProblem& prob, const Vector& x);

/// Upper bound on dist(0, grad f(x) + range(grad c(x)) + N_X(x)) from alternating
/// least squares over the multipliers and projection onto the normal cone.
double kkt_residual_original(const PenaltyProblem& prob, const Vector& x);

/// Largest curvature of h near x0 from secant power iterations along projected perturbations.
double estimate_lipschitz(const PenaltyProblem& prob, const Vector& x0, int iterations = 20,
                          std::uint64_t seed = 0);

}  // namespace dissolve
