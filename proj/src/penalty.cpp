#include "dissolve/penalty.hpp"

#include <cmath>

namespace dissolve {

void PenaltyProblem::validate() const {
  const Index n = set.dim();
  require_dim(f.n, n, "objective");
  require_dim(cmap.n, n, "constraint map");
  require_dim(amap.n, n, "dissolving map");
  if (!(beta >= 0) || !std::isfinite(beta)) throw InvalidInput("penalty problem: beta must be >= 0");
  if (!f.value || !f.grad || !cmap.value || !cmap.jac_t_apply || !amap.value || !amap.vjp) {
    throw InvalidInput("penalty problem: missing callback");
  }
}

double h_value(const PenaltyProblem& prob, const Vector& x) {
  require_dim(x.size(), prob.dim(), "h_value");
  const Vector c = prob.cmap.value(x);
  return prob.f.value(prob.amap.value(x)) + 0.5 * prob.beta * c.squaredNorm();
}

Vector h_grad(const PenaltyProblem& prob, const Vector& x) { return h_eval(prob, x).grad; }

PenaltyEval h_eval(const PenaltyProblem& prob, const Vector& x) {
  require_dim(x.size(), prob.dim(), "h_eval");
  PenaltyEval e;
  e.c = prob.cmap.value(x);
  const Vector ax = prob.amap.value(x);
  e.h = prob.f.value(ax) + 0.5 * prob.beta * e.c.squaredNorm();
  e.grad = prob.amap.vjp(x, prob.f.grad(ax));
  if (prob.cmap.p > 0 && prob.beta != 0.0) e.grad += prob.beta * prob.cmap.jac_t_apply(x, e.c);
  return e;
}

}  // namespace dissolve
