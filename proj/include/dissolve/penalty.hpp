#pragma once

#include <functional>

#include "dissolve/constraint.hpp"
#include "dissolve/dissolving_map.hpp"
#include "dissolve/sets.hpp"

namespace dissolve {

struct Objective {
  Index n = 0;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
};

/// min_x h(x) = f(A(x)) + (beta / 2) ||c(x)||^2 over x in X.
struct PenaltyProblem {
  Objective f;
  ConstraintMap cmap;
  DissolvingMap amap;
  ConvexSet set;
  double beta = 0.0;

  Index dim() const { return set.dim(); }
  /// Throws InvalidInput on inconsistent dimensions or a negative beta.
  void validate() const;
};

double h_value(const PenaltyProblem& prob, const Vector& x);
Vector h_grad(const PenaltyProblem& prob, const Vector& x);

/// h and its gradient sharing one evaluation of A(x) and c(x).
struct PenaltyEval {
  double h;
  Vector grad;
  Vector c;
};
PenaltyEval h_eval(const PenaltyProblem& prob, const Vector& x);

}  // namespace dissolve
