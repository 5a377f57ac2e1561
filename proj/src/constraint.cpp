#include "dissolve/constraint.hpp"

#include <cmath>

namespace dissolve {

Matrix ConstraintMap::jacobian(const Vector& x) const {
  require_dim(x.size(), n, "jacobian");
  Matrix J(n, p);
  for (Index i = 0; i < p; ++i) J.col(i) = jac_t_apply(x, Vector::Unit(p, i));
  return J;
}

ConstraintMap no_constraints(Index n) {
  ConstraintMap c;
  c.n = n;
  c.p = 0;
  c.value = [](const Vector&) { return Vector(); };
  c.jac_t_apply = [n](const Vector&, const Vector&) { return Vector::Zero(n).eval(); };
  c.jac_apply = [](const Vector&, const Vector&) { return Vector(); };
  c.hess_apply = [n](const Vector&, const Vector&, const Vector&) { return Vector::Zero(n).eval(); };
  return c;
}

ConstraintMap sphere_constraint(Matrix H) {
  if (H.rows() != H.cols()) throw InvalidInput("sphere_constraint: H must be square");
  if (!H.isApprox(H.transpose(), 1e-12)) throw InvalidInput("sphere_constraint: H must be symmetric");
  ConstraintMap c;
  c.n = H.rows();
  c.p = 1;
  c.value = [H](const Vector& x) { return Vector::Constant(1, x.dot(H * x) - 1.0).eval(); };
  c.jac_t_apply = [H](const Vector& x, const Vector& v) { return (2.0 * v[0] * (H * x)).eval(); };
  c.jac_apply = [H](const Vector& x, const Vector& d) {
    return Vector::Constant(1, 2.0 * d.dot(H * x)).eval();
  };
  c.hess_apply = [H](const Vector&, const Vector& lam, const Vector& d) {
    return (2.0 * lam[0] * (H * d)).eval();
  };
  return c;
}

ConstraintMap shifted_sphere_constraint(Vector center, double radius) {
  ConstraintMap c;
  c.n = center.size();
  c.p = 1;
  const double r2 = radius * radius;
  c.value = [center, r2](const Vector& x) {
    return Vector::Constant(1, (x - center).squaredNorm() - r2).eval();
  };
  c.jac_t_apply = [center](const Vector& x, const Vector& v) {
    return (2.0 * v[0] * (x - center)).eval();
  };
  c.jac_apply = [center](const Vector& x, const Vector& d) {
    return Vector::Constant(1, 2.0 * d.dot(x - center)).eval();
  };
  c.hess_apply = [](const Vector&, const Vector& lam, const Vector& d) {
    return (2.0 * lam[0] * d).eval();
  };
  return c;
}

ConstraintMap lq_sphere_constraint(Index n, double q) {
  if (!(q > 1)) throw InvalidInput("lq_sphere_constraint: exponent must exceed 1");
  auto grad = [q](const Vector& x) {
    return x.unaryExpr([q](double s) {
      return q * (s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0)) * std::pow(std::abs(s), q - 1.0);
    }).eval();
  };
  ConstraintMap c;
  c.n = n;
  c.p = 1;
  c.value = [q](const Vector& x) {
    return Vector::Constant(1, x.array().abs().pow(q).sum() - 1.0).eval();
  };
  c.jac_t_apply = [grad](const Vector& x, const Vector& v) { return (v[0] * grad(x)).eval(); };
  c.jac_apply = [grad](const Vector& x, const Vector& d) {
    return Vector::Constant(1, grad(x).dot(d)).eval();
  };
  c.hess_apply = [q](const Vector& x, const Vector& lam, const Vector& d) {
    const Vector curv = x.unaryExpr([q](double s) { return q * (q - 1.0) * std::pow(std::abs(s), q - 2.0); });
    return (lam[0] * curv.cwiseProduct(d)).eval();
  };
  return c;
}

ConstraintMap unit_diagonal_constraint(Index size) {
  ConstraintMap c;
  c.n = size * size;
  c.p = size;
  c.value = [size](const Vector& x) {
    Vector out(size);
    for (Index i = 0; i < size; ++i) out[i] = x[i + i * size] - 1.0;
    return out;
  };
  c.jac_t_apply = [size](const Vector&, const Vector& v) {
    Vector out = Vector::Zero(size * size);
    for (Index i = 0; i < size; ++i) out[i + i * size] = v[i];
    return out;
  };
  c.jac_apply = [size](const Vector&, const Vector& d) {
    Vector out(size);
    for (Index i = 0; i < size; ++i) out[i] = d[i + i * size];
    return out;
  };
  c.hess_apply = [size](const Vector&, const Vector&, const Vector&) {
    return Vector::Zero(size * size).eval();
  };
  return c;
}

ConstraintMap unit_column_constraint(Index rows, Index cols) {
  using ConstMap = Eigen::Map<const Matrix>;
  ConstraintMap c;
  c.n = rows * cols;
  c.p = cols;
  c.value = [rows, cols](const Vector& x) {
    const ConstMap X(x.data(), rows, cols);
    return (X.colwise().squaredNorm().transpose().array() - 1.0).matrix().eval();
  };
  c.jac_t_apply = [rows, cols](const Vector& x, const Vector& v) {
    const ConstMap X(x.data(), rows, cols);
    const Matrix G = 2.0 * X * v.asDiagonal();
    return Eigen::Map<const Vector>(G.data(), G.size()).eval();
  };
  c.jac_apply = [rows, cols](const Vector& x, const Vector& d) {
    const ConstMap X(x.data(), rows, cols);
    const ConstMap D(d.data(), rows, cols);
    return (2.0 * X.cwiseProduct(D).colwise().sum().transpose()).eval();
  };
  c.hess_apply = [rows, cols](const Vector&, const Vector& lam, const Vector& d) {
    const ConstMap D(d.data(), rows, cols);
    const Matrix G = 2.0 * D * lam.asDiagonal();
    return Eigen::Map<const Vector>(G.data(), G.size()).eval();
  };
  return c;
}

ConstraintMap affine_constraint(Matrix A, Vector b) {
  if (A.cols() != b.size()) throw InvalidInput("affine_constraint: A must be n x p with b in R^p");
  ConstraintMap c;
  c.n = A.rows();
  c.p = A.cols();
  c.value = [A, b](const Vector& x) { return (A.transpose() * x - b).eval(); };
  c.jac_t_apply = [A](const Vector&, const Vector& v) { return (A * v).eval(); };
  c.jac_apply = [A](const Vector&, const Vector& d) { return (A.transpose() * d).eval(); };
  const Index n = A.rows();
  c.hess_apply = [n](const Vector&, const Vector&, const Vector&) { return Vector::Zero(n).eval(); };
  return c;
}

}  // namespace dissolve
