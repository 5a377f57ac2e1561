#include "dissolve/linalg.hpp"

#include <Eigen/SVD>

namespace dissolve::linalg {

Matrix pinv(const Matrix& M, double rel_cutoff) {
  if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = rel_cutoff * (s.size() > 0 ? s[0] : 0.0);
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff && s[i] > 0.0) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Vector singular_values(const Matrix& M) {
  if (M.size() == 0) return Vector();
  return Eigen::JacobiSVD<Matrix>(M).singularValues();
}

Index numerical_rank(const Matrix& M, double rel_cutoff) {
  const Vector s = singular_values(M);
  if (s.size() == 0 || s[0] == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s[i] > rel_cutoff * s[0]) ++r;
  }
  return r;
}

}  // namespace dissolve::linalg
