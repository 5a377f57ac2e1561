#include "dissolve/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>

#include "dissolve/linalg.hpp"
#include "dissolve/rng.hpp"

namespace dissolve {

namespace {

bool finite(const PenaltyEval& e) { return std::isfinite(e.h) && e.grad.allFinite(); }

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void finalize(const PenaltyProblem& prob, const Vector& x, SolveResult& r) {
  r.x_final = x;
  const Vector px = prob.set.project(x);
  try {
    r.f_val = prob.f.value(prob.amap.value(px));
    r.h_val = h_value(prob, px);
  } catch (const std::exception&) {
    r.f_val = std::numeric_limits<double>::quiet_NaN();
    r.h_val = r.f_val;
  }
  r.feas = feasibility_measure(prob, x);
  r.beta_final = prob.beta;
}

void check_start(const PenaltyProblem& prob, const Vector& x0, const SolverConfig& config) {
  prob.validate();
  config.validate();
  require_dim(x0.size(), prob.dim(), "solver start point");
  if (!prob.set.contains(x0)) throw DomainError("solver: start point lies outside X");
}

// Tracks the continuation rule; returns true when beta was raised.
class BetaController {
 public:
  explicit BetaController(const SolverConfig& config) : schedule_(config.beta_schedule), tol_feas_(config.tol_feas) {}

  bool update(PenaltyProblem& prob, int iter, double feas) {
    if (schedule_.kind != BetaSchedule::Kind::continuation) return false;
    if (iter == 0) {
      window_start_ = feas;
      return false;
    }
    if (iter % schedule_.window != 0) return false;
    const bool stalled = feas > tol_feas_ && feas > schedule_.stall_ratio * window_start_;
    window_start_ = feas;
    if (!stalled) return false;
    prob.beta *= schedule_.factor;
    return true;
  }

 private:
  BetaSchedule schedule_;
  double tol_feas_;
  double window_start_ = 0.0;
};

}  // namespace

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::line_search_failure: return "line_search_failure";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

std::string to_string(StepRule rule) {
  return rule == StepRule::fixed ? "fixed" : "bb_nonmonotone";
}

void SolverConfig::validate() const {
  if (!(tol_stat > 0) || !(tol_feas > 0)) throw InvalidInput("solver: tolerances must be positive");
  if (max_iter < 0) throw InvalidInput("solver: max_iter must be nonnegative");
  if (!(alpha_min > 0) || !(alpha_min <= alpha_max)) {
    throw InvalidInput("solver: need 0 < alpha_min <= alpha_max");
  }
  if (nm_memory < 1) throw InvalidInput("solver: nm_memory must be positive");
  if (!(armijo_c > 0 && armijo_c < 1)) throw InvalidInput("solver: armijo_c must lie in (0, 1)");
  if (!(backtrack_factor > 0 && backtrack_factor < 1)) {
    throw InvalidInput("solver: backtrack_factor must lie in (0, 1)");
  }
  if (max_backtracks < 1) throw InvalidInput("solver: max_backtracks must be positive");
  if (beta_schedule.kind == BetaSchedule::Kind::continuation &&
      (!(beta_schedule.factor > 1) || beta_schedule.window < 1 ||
       !(beta_schedule.stall_ratio > 0 && beta_schedule.stall_ratio <= 1))) {
    throw InvalidInput("solver: invalid continuation schedule");
  }
}

double stationarity_from_grad(const ConvexSet& set, const Vector& x, const Vector& grad) {
  return (x - set.project(x - grad)).norm() / (1.0 + x.norm());
}

double stationarity_measure(const PenaltyProblem& prob, const Vector& x) {
  return stationarity_from_grad(prob.set, x, h_grad(prob, x));
}

double feasibility_measure(const PenaltyProblem& prob, const Vector& x) {
  if (prob.cmap.p == 0) return 0.0;
  return prob.cmap.value(prob.set.project(x)).norm();
}

double kkt_residual_original(const PenaltyProblem& prob, const Vector& x) {
  require_dim(x.size(), prob.dim(), "kkt_residual_original");
  const Vector g = prob.f.grad(x);
  Matrix J_pinv;
  Matrix J;
  if (prob.cmap.p > 0) {
    J = prob.cmap.jacobian(x);
    J_pinv = linalg::pinv(J, 1e-12);
  }
  Vector nu = Vector::Zero(x.size());
  double best = g.norm();
  double previous = best;
  for (int round = 0; round < 100; ++round) {
    Vector u = g;
    if (prob.cmap.p > 0) {
      const Vector shifted = g + nu;
      u -= J * (J_pinv * shifted);
    }
    nu = prob.set.project_normal_cone(x, -u);
    const double current = (u + nu).norm();
    best = std::min(best, current);
    if (std::abs(previous - current) < 1e-12) break;
    previous = current;
  }
  return best;
}

double estimate_lipschitz(const PenaltyProblem& prob, const Vector& x0, int iterations,
                          std::uint64_t seed) {
  Rng rng(seed, 0x4c4950ULL);
  const Vector g0 = h_grad(prob, x0);
  const double eps = 1e-6 * (1.0 + x0.norm());
  Vector v = rng.normal_vector(x0.size());
  v /= v.norm();
  double L = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Vector b = prob.set.project(x0 + eps * v);
    const Vector u = b - x0;
    const double un = u.norm();
    if (un == 0.0) {
      v = rng.normal_vector(x0.size());
      v /= v.norm();
      continue;
    }
    const Vector hv = h_grad(prob, b) - g0;
    const double hn = hv.norm();
    L = std::max(L, hn / un);
    if (hn == 0.0) break;
    v = hv / hn;
  }
  if (!(L > 0) || !std::isfinite(L)) L = 1.0;
  return L;
}

SolveResult projected_gradient(const PenaltyProblem& problem, const Vector& x0,
                               const SolverConfig& config) {
  check_start(problem, x0, config);
  PenaltyProblem prob = problem;
  SolveResult r;
  const double eta = config.eta > 0 ? config.eta : 1.0 / estimate_lipschitz(prob, x0);
  const Timer timer;
  BetaController beta(config);
  Vector x = x0;
  PenaltyEval e = h_eval(prob, x);
  if (!finite(e)) {
    r.status = SolveStatus::numerical_failure;
    r.trace.push_back({e.h, e.c.norm(), std::numeric_limits<double>::quiet_NaN(), 0.0});
    finalize(prob, x, r);
    r.stat = r.trace.back().stat;
    r.wall_time_s = timer.seconds();
    return r;
  }
  double feas = e.c.norm();
  double stat = stationarity_from_grad(prob.set, x, e.grad);
  r.trace.push_back({e.h, feas, stat, 0.0});
  r.status = SolveStatus::max_iter;
  int k = 0;
  for (; k < config.max_iter; ++k) {
    if (stat <= config.tol_stat && feas <= config.tol_feas) {
      r.status = SolveStatus::converged;
      break;
    }
    if (beta.update(prob, k, feas)) e = h_eval(prob, x);
    const Vector xn = prob.set.project(x - eta * e.grad);
    const PenaltyEval en = h_eval(prob, xn);
    if (!finite(en)) {
      r.status = SolveStatus::numerical_failure;
      break;
    }
    x = xn;
    e = en;
    feas = e.c.norm();
    stat = stationarity_from_grad(prob.set, x, e.grad);
    r.trace.push_back({e.h, feas, stat, eta});
  }
  if (r.status == SolveStatus::max_iter && stat <= config.tol_stat && feas <= config.tol_feas) {
    r.status = SolveStatus::converged;
  }
  r.wall_time_s = timer.seconds();
  r.iters = static_cast<int>(r.trace.size()) - 1;
  finalize(prob, x, r);
  r.stat = stat;
  return r;
}

SolveResult pg_bb(const PenaltyProblem& problem, const Vector& x0, const SolverConfig& config) {
  check_start(problem, x0, config);
  PenaltyProblem prob = problem;
  SolveResult r;
  const Timer timer;
  BetaController beta(config);
  Vector x = x0;
  PenaltyEval e = h_eval(prob, x);
  if (!finite(e)) {
    r.status = SolveStatus::numerical_failure;
    r.trace.push_back({e.h, e.c.norm(), std::numeric_limits<double>::quiet_NaN(), 0.0});
    finalize(prob, x, r);
    r.stat = r.trace.back().stat;
    r.wall_time_s = timer.seconds();
    return r;
  }
  double feas = e.c.norm();
  double stat = stationarity_from_grad(prob.set, x, e.grad);
  r.trace.push_back({e.h, feas, stat, 0.0});

  const double ginf = e.grad.cwiseAbs().maxCoeff();
  double alpha = ginf > 0 ? std::min(1.0, 1.0 / ginf) : 1.0;
  std::deque<double> history{e.h};
  Vector best_x = x;
  PenaltyEval best_e = e;
  double best_stat = stat;

  r.status = SolveStatus::max_iter;
  for (int k = 0; k < config.max_iter; ++k) {
    if (stat <= config.tol_stat && feas <= config.tol_feas) {
      r.status = SolveStatus::converged;
      break;
    }
    if (beta.update(prob, k, feas)) {
      e = h_eval(prob, x);
      history.assign(1, e.h);
      best_x = x;
      best_e = e;
      best_stat = stat;
    }
    const double reference = *std::max_element(history.begin(), history.end());
    double t = alpha;
    bool accepted = false;
    bool numerical = false;
    Vector xt;
    PenaltyEval et;
    for (int bt = 0; bt <= config.max_backtracks; ++bt) {
      xt = prob.set.project(x - t * e.grad);
      if (config.max_step_norm > 0) {
        const double dn = (xt - x).norm();
        if (dn > config.max_step_norm) xt = x + (config.max_step_norm / dn) * (xt - x);
      }
      et = h_eval(prob, xt);
      if (finite(et) && et.h <= reference + config.armijo_c * e.grad.dot(xt - x)) {
        accepted = true;
        break;
      }
      if (!std::isfinite(et.h) && bt == config.max_backtracks) numerical = true;
      t *= config.backtrack_factor;
    }
    if (!accepted) {
      r.status = numerical ? SolveStatus::numerical_failure : SolveStatus::line_search_failure;
      x = best_x;
      e = best_e;
      feas = e.c.norm();
      stat = best_stat;
      break;
    }
    const Vector s = xt - x;
    const Vector y = et.grad - e.grad;
    const double sy = s.dot(y);
    alpha = sy > 0 ? std::clamp(s.squaredNorm() / sy, config.alpha_min, config.alpha_max)
                   : (config.alpha_max_on_negative_curvature ? config.alpha_max : t);
    x = xt;
    e = et;
    feas = e.c.norm();
    stat = stationarity_from_grad(prob.set, x, e.grad);
    r.trace.push_back({e.h, feas, stat, t});
    history.push_back(e.h);
    if (static_cast<int>(history.size()) > config.nm_memory) history.pop_front();
    if (e.h < best_e.h) {
      best_x = x;
      best_e = e;
      best_stat = stat;
    }
  }
  if (r.status == SolveStatus::max_iter && stat <= config.tol_stat && feas <= config.tol_feas) {
    r.status = SolveStatus::converged;
  }
  r.wall_time_s = timer.seconds();
  r.iters = static_cast<int>(r.trace.size()) - 1;
  finalize(prob, x, r);
  r.stat = stat;
  return r;
}

SolveResult solve(const PenaltyProblem& prob, const Vector& x0, const SolverConfig& config) {
  return config.step_rule == StepRule::fixed ? projected_gradient(prob, x0, config)
                                             : pg_bb(prob, x0, config);
}

}  // namespace dissolve
