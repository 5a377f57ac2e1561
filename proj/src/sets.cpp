#include "dissolve/sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dissolve/linalg.hpp"

namespace dissolve {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kInf = std::numeric_limits<double>::infinity();

using ConstMap = Eigen::Map<const Matrix>;

Vector flatten(const Matrix& M) { return Eigen::Map<const Vector>(M.data(), M.size()); }

// Projection onto the PSD cone of a symmetric matrix.
Matrix psd_part(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  const Vector lam = eig.eigenvalues().cwiseMax(0.0);
  return detail::sym(eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose());
}

// ---------------------------------------------------------------- Box

double box_q(double l, double u, double s) {
  const bool lo = std::isfinite(l);
  const bool hi = std::isfinite(u);
  if (lo && hi) return (s - l) * (u - s);
  if (lo) return s - l;
  if (hi) return u - s;
  return 1.0;
}

double box_dq(double l, double u, double s) {
  const bool lo = std::isfinite(l);
  const bool hi = std::isfinite(u);
  if (lo && hi) return u + l - 2.0 * s;
  if (lo) return 1.0;
  if (hi) return -1.0;
  return 0.0;
}

Vector project_impl(const sets::Box& b, const Vector& x) {
  return x.cwiseMax(b.lower).cwiseMin(b.upper);
}

Vector q_impl(const sets::Box& b, const Vector& x, const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = box_q(b.lower[i], b.upper[i], x[i]) * v[i];
  return out;
}

Vector dq_impl(const sets::Box& b, const Vector& x, const Vector& d, const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = box_dq(b.lower[i], b.upper[i], x[i]) * d[i] * v[i];
  return out;
}

Vector dq_adj_impl(const sets::Box& b, const Vector& x, const Vector& w, const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = box_dq(b.lower[i], b.upper[i], x[i]) * w[i] * v[i];
  return out;
}

Vector normal_impl(const sets::Box& b, const Vector& x, const Vector& v, double tol) {
  Vector out = Vector::Zero(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const bool at_lo = std::isfinite(b.lower[i]) && x[i] - b.lower[i] <= tol;
    const bool at_hi = std::isfinite(b.upper[i]) && b.upper[i] - x[i] <= tol;
    if (at_lo && at_hi) {
      out[i] = v[i];
    } else if (at_lo) {
      out[i] = std::min(v[i], 0.0);
    } else if (at_hi) {
      out[i] = std::max(v[i], 0.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------- Nonnegative orthant

Vector project_impl(const sets::NonnegOrthant&, const Vector& x) { return x.cwiseMax(0.0); }

Vector q_impl(const sets::NonnegOrthant&, const Vector& x, const Vector& v) {
  return x.cwiseProduct(v);
}

Vector dq_impl(const sets::NonnegOrthant&, const Vector&, const Vector& d, const Vector& v) {
  return d.cwiseProduct(v);
}

Vector dq_adj_impl(const sets::NonnegOrthant&, const Vector&, const Vector& w, const Vector& v) {
  return w.cwiseProduct(v);
}

Vector normal_impl(const sets::NonnegOrthant&, const Vector& x, const Vector& v, double tol) {
  Vector out = Vector::Zero(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    if (x[i] <= tol) out[i] = std::min(v[i], 0.0);
  }
  return out;
}

// ---------------------------------------------------------------- Norm ball

bool is_euclidean(const sets::NormBall& b) { return b.exponent == 2.0; }

double lq_norm_pow(const Vector& x, double q) { return x.array().abs().pow(q).sum(); }

// Solves t + mu * q * t^(q-1) = a for t in [0, a].
double lq_scalar_root(double a, double mu, double q) {
  if (a == 0.0 || mu == 0.0) return a;
  double lo = 0.0;
  double hi = a;
  double t = a;
  for (int it = 0; it < 200; ++it) {
    const double phi = t + mu * q * std::pow(t, q - 1.0) - a;
    if (phi > 0) {
      hi = t;
    } else {
      lo = t;
    }
    const double dphi = 1.0 + mu * q * (q - 1.0) * std::pow(t, q - 2.0);
    double next = t - phi / dphi;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-17 * a || hi - lo <= 1e-17 * a) return next;
    t = next;
  }
  return t;
}

Vector project_lq_ball(const Vector& x, double radius, double q) {
  const double target = std::pow(radius, q);
  if (lq_norm_pow(x, q) <= target) return x;
  const Vector a = x.cwiseAbs();
  auto radial = [&](double mu) {
    Vector t(a.size());
    for (Index i = 0; i < a.size(); ++i) t[i] = lq_scalar_root(a[i], mu, q);
    return t;
  };
  double lo = 0.0;
  double hi = 1.0;
  while (lq_norm_pow(radial(hi), q) > target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (lq_norm_pow(radial(mid), q) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Vector t = radial(hi);
  const double norm = std::pow(lq_norm_pow(t, q), 1.0 / q);
  if (norm > radius) t *= radius / norm;
  return t.cwiseProduct(x.unaryExpr([](double s) { return s < 0 ? -1.0 : 1.0; }));
}

Vector lq_s(const Vector& x, double q) {
  return x.unaryExpr([q](double s) {
    return (s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0)) * std::pow(std::abs(s), q - 1.0);
  });
}

Vector lq_kappa(const Vector& x, double q) {
  Vector k(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0 && q < 2.0) {
      throw DomainError(
          "dq_apply: l_q ball with exponent < 2 has no derivative at zero coordinates");
    }
    k[i] = (q == 2.0) ? 1.0 : (q - 1.0) * std::pow(std::abs(x[i]), q - 2.0);
  }
  return k;
}

Vector project_impl(const sets::NormBall& b, const Vector& x) {
  if (is_euclidean(b)) {
    const double nx = x.norm();
    return nx <= b.radius ? Vector(x) : Vector(x * (b.radius / nx));
  }
  return project_lq_ball(x, b.radius, b.exponent);
}

Vector q_impl(const sets::NormBall& b, const Vector& x, const Vector& v) {
  if (is_euclidean(b)) return v - x * (x.dot(v) / (b.radius * b.radius));
  const double q = b.exponent;
  const double uq = std::pow(b.radius, q);
  const Vector s = lq_s(x, q);
  const double a = x.dot(v);
  return v - (s * a + x * s.dot(v)) / uq + x * (s.squaredNorm() * a / (uq * uq));
}

Vector dq_impl(const sets::NormBall& b, const Vector& x, const Vector& d, const Vector& v) {
  if (is_euclidean(b)) return -(d * x.dot(v) + x * d.dot(v)) / (b.radius * b.radius);
  const double q = b.exponent;
  const double uq = std::pow(b.radius, q);
  const Vector s = lq_s(x, q);
  const Vector ds = lq_kappa(x, q).cwiseProduct(d);
  const double a = x.dot(v);
  const double bb = s.dot(v);
  const double S = s.squaredNorm();
  return -(ds * a + s * d.dot(v) + d * bb + x * ds.dot(v)) / uq +
         x * (2.0 * s.dot(ds) * a / (uq * uq)) + (d * a + x * d.dot(v)) * (S / (uq * uq));
}

Vector dq_adj_impl(const sets::NormBall& b, const Vector& x, const Vector& w, const Vector& v) {
  if (is_euclidean(b)) return -(w * x.dot(v) + v * x.dot(w)) / (b.radius * b.radius);
  const double q = b.exponent;
  const double uq = std::pow(b.radius, q);
  const Vector s = lq_s(x, q);
  const Vector kappa = lq_kappa(x, q);
  const double a = x.dot(v);
  const double alpha = x.dot(w);
  const double S = s.squaredNorm();
  return -(a * kappa.cwiseProduct(w) + s.dot(w) * v + s.dot(v) * w +
           alpha * kappa.cwiseProduct(v)) /
             uq +
         kappa.cwiseProduct(s) * (2.0 * alpha * a / (uq * uq)) + (a * w + alpha * v) * (S / (uq * uq));
}

Vector normal_impl(const sets::NormBall& b, const Vector& x, const Vector& v, double tol) {
  const double norm = is_euclidean(b) ? x.norm() : std::pow(lq_norm_pow(x, b.exponent), 1.0 / b.exponent);
  if (norm < b.radius - tol) return Vector::Zero(v.size());
  const Vector g = is_euclidean(b) ? Vector(x) : lq_s(x, b.exponent);
  const double gg = g.squaredNorm();
  if (gg == 0.0) return Vector::Zero(v.size());
  return g * (std::max(g.dot(v), 0.0) / gg);
}

// ---------------------------------------------------------------- Simplex

Vector project_impl(const sets::Simplex& s, const Vector& x) {
  std::vector<double> u(x.data(), x.data() + x.size());
  std::stable_sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (Index j = 0; j < s.n; ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0) tau = t;
  }
  return (x.array() - tau).cwiseMax(0.0);
}

Vector simplex_m(const Vector& x, const Vector& v) { return x.cwiseProduct(v) - x * x.dot(v); }

Vector simplex_dm(const Vector& x, const Vector& d, const Vector& v) {
  return d.cwiseProduct(v) - d * x.dot(v) - x * d.dot(v);
}

// Gradient in d of <a, dM[d] b>.
Vector simplex_dm_adj(const Vector& x, const Vector& a, const Vector& b) {
  return a.cwiseProduct(b) - a * x.dot(b) - b * a.dot(x);
}

Vector q_impl(const sets::Simplex&, const Vector& x, const Vector& v) {
  return simplex_m(x, simplex_m(x, v));
}

Vector dq_impl(const sets::Simplex&, const Vector& x, const Vector& d, const Vector& v) {
  return simplex_dm(x, d, simplex_m(x, v)) + simplex_m(x, simplex_dm(x, d, v));
}

Vector dq_adj_impl(const sets::Simplex&, const Vector& x, const Vector& w, const Vector& v) {
  return simplex_dm_adj(x, w, simplex_m(x, v)) + simplex_dm_adj(x, simplex_m(x, w), v);
}

// N(x) = {t 1 - mu : mu >= 0 supported on zero coordinates}. For fixed t the residual of
// v against the cone is v_i - t off the active set and (v_i - t)_+ on it, so t solves a
// monotone piecewise-linear equation.
Vector normal_impl(const sets::Simplex&, const Vector& x, const Vector& v, double tol) {
  const Index n = v.size();
  double free_sum = 0.0;
  Index free_count = 0;
  std::vector<double> active;
  for (Index i = 0; i < n; ++i) {
    if (x[i] <= tol) {
      active.push_back(v[i]);
    } else {
      free_sum += v[i];
      ++free_count;
    }
  }
  std::sort(active.begin(), active.end(), std::greater<>());
  double t = 0.0;
  double sum = free_sum;
  for (std::size_t j = 0; j <= active.size(); ++j) {
    const auto count = static_cast<double>(free_count + static_cast<Index>(j));
    if (count > 0) {
      t = sum / count;
      const bool upper_ok = (j == 0) || active[j - 1] > t;
      const bool lower_ok = (j == active.size()) || active[j] <= t;
      if (upper_ok && lower_ok) break;
    }
    if (j < active.size()) sum += active[j];
  }
  Vector residual(n);
  for (Index i = 0; i < n; ++i) {
    residual[i] = (x[i] <= tol) ? std::max(v[i] - t, 0.0) : v[i] - t;
  }
  return v - residual;
}

// ---------------------------------------------------------------- Second-order cone

Vector project_impl(const sets::SecondOrderCone& c, const Vector& z) {
  const auto x = z.head(c.n);
  const double y = z[c.n];
  const double nx = x.norm();
  if (nx <= y) return z;
  if (nx <= -y) return Vector::Zero(z.size());
  const double scale = 0.5 * (nx + y);
  Vector out(z.size());
  out.head(c.n) = x * (scale / nx);
  out[c.n] = scale;
  return out;
}

struct SocParts {
  Vector omega;  // (x, -y)
  double g;      // exp(||x||^2 - y^2)
};

SocParts soc_parts(const sets::SecondOrderCone& c, const Vector& z) {
  SocParts p;
  p.omega = z;
  p.omega[c.n] = -z[c.n];
  p.g = std::exp(z.head(c.n).squaredNorm() - z[c.n] * z[c.n]);
  return p;
}

Vector flip_last(Vector v) {
  v[v.size() - 1] = -v[v.size() - 1];
  return v;
}

Vector q_impl(const sets::SecondOrderCone& c, const Vector& z, const Vector& v) {
  const SocParts p = soc_parts(c, z);
  return z.squaredNorm() * v - p.g * p.omega * p.omega.dot(v);
}

Vector dq_impl(const sets::SecondOrderCone& c, const Vector& z, const Vector& d, const Vector& v) {
  const SocParts p = soc_parts(c, z);
  const double dg = 2.0 * p.g * p.omega.dot(d);
  const Vector domega = flip_last(d);
  const double ov = p.omega.dot(v);
  return 2.0 * z.dot(d) * v - dg * ov * p.omega - p.g * ov * domega - p.g * domega.dot(v) * p.omega;
}

Vector dq_adj_impl(const sets::SecondOrderCone& c, const Vector& z, const Vector& w,
                   const Vector& v) {
  const SocParts p = soc_parts(c, z);
  const double wo = w.dot(p.omega);
  const double ov = p.omega.dot(v);
  return 2.0 * w.dot(v) * z - 2.0 * p.g * wo * ov * p.omega - p.g * ov * flip_last(w) -
         p.g * wo * flip_last(v);
}

Vector normal_impl(const sets::SecondOrderCone& c, const Vector& z, const Vector& v, double tol) {
  const double nx = z.head(c.n).norm();
  const double y = z[c.n];
  if (nx <= tol && std::abs(y) <= tol) {
    // Apex: the normal cone is the negative of the (self-dual) cone.
    return -project_impl(c, -v);
  }
  if (nx < y - tol) return Vector::Zero(v.size());
  const Vector omega = flip_last(z);
  return omega * (std::max(omega.dot(v), 0.0) / omega.squaredNorm());
}

// ---------------------------------------------------------------- Spectral ball

Vector project_impl(const sets::SpectralBall& s, const Vector& x) {
  const ConstMap X(x.data(), s.rows, s.cols);
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues().size() == 0 || svd.singularValues()[0] <= 1.0) return x;
  const Vector sig = svd.singularValues().cwiseMin(1.0);
  return flatten(svd.matrixU() * sig.asDiagonal() * svd.matrixV().transpose());
}

Vector q_impl(const sets::SpectralBall& s, const Vector& x, const Vector& v) {
  const ConstMap X(x.data(), s.rows, s.cols);
  const ConstMap Y(v.data(), s.rows, s.cols);
  return flatten(Y - X * detail::sym(X.transpose() * Y));
}

Vector dq_impl(const sets::SpectralBall& s, const Vector& x, const Vector& d, const Vector& v) {
  const ConstMap X(x.data(), s.rows, s.cols);
  const ConstMap D(d.data(), s.rows, s.cols);
  const ConstMap Y(v.data(), s.rows, s.cols);
  return flatten(-D * detail::sym(X.transpose() * Y) - X * detail::sym(D.transpose() * Y));
}

Vector dq_adj_impl(const sets::SpectralBall& s, const Vector& x, const Vector& w, const Vector& v) {
  const ConstMap X(x.data(), s.rows, s.cols);
  const ConstMap W(w.data(), s.rows, s.cols);
  const ConstMap Y(v.data(), s.rows, s.cols);
  return flatten(-W * detail::sym(X.transpose() * Y) - Y * detail::sym(X.transpose() * W));
}

Vector normal_impl(const sets::SpectralBall& s, const Vector& x, const Vector& v, double tol) {
  const ConstMap X(x.data(), s.rows, s.cols);
  const ConstMap V(v.data(), s.rows, s.cols);
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sig = svd.singularValues();
  Index active = 0;
  while (active < sig.size() && sig[active] >= 1.0 - tol) ++active;
  if (active == 0) return Vector::Zero(v.size());
  const Matrix U1 = svd.matrixU().leftCols(active);
  const Matrix V1 = svd.matrixV().leftCols(active);
  const Matrix M = psd_part(detail::sym(U1.transpose() * V * V1));
  return flatten(U1 * M * V1.transpose());
}

// ---------------------------------------------------------------- PSD cone and PSD spectral ball

Vector project_psd(Index size, const Vector& x, double upper) {
  const ConstMap X(x.data(), size, size);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::sym(X));
  const Vector lam = eig.eigenvalues().cwiseMax(0.0).cwiseMin(upper);
  return flatten(detail::sym(eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose()));
}

Vector project_impl(const sets::PsdCone& p, const Vector& x) { return project_psd(p.size, x, kInf); }

Vector project_impl(const sets::PsdSpectralBall& p, const Vector& x) {
  return project_psd(p.size, x, 1.0);
}

// Q(X) Y = X Phi(Y) X. The symmetrization makes antisymmetric directions (the orthogonal
// complement of the affine hull) part of the null space.
Vector q_impl(const sets::PsdCone& p, const Vector& x, const Vector& v) {
  const ConstMap X(x.data(), p.size, p.size);
  const Matrix Ys = detail::sym(ConstMap(v.data(), p.size, p.size));
  return flatten(X * Ys * X);
}

Vector dq_impl(const sets::PsdCone& p, const Vector& x, const Vector& d, const Vector& v) {
  const ConstMap X(x.data(), p.size, p.size);
  const ConstMap D(d.data(), p.size, p.size);
  const Matrix Ys = detail::sym(ConstMap(v.data(), p.size, p.size));
  return flatten(D * Ys * X + X * Ys * D);
}

Vector dq_adj_impl(const sets::PsdCone& p, const Vector& x, const Vector& w, const Vector& v) {
  const ConstMap X(x.data(), p.size, p.size);
  const ConstMap W(w.data(), p.size, p.size);
  const Matrix Ys = detail::sym(ConstMap(v.data(), p.size, p.size));
  return flatten(W * X.transpose() * Ys + Ys * X.transpose() * W);
}

Vector q_impl(const sets::PsdSpectralBall& p, const Vector& x, const Vector& v) {
  const ConstMap X(x.data(), p.size, p.size);
  const Matrix X2 = X * X;
  const Matrix Ys = detail::sym(ConstMap(v.data(), p.size, p.size));
  return flatten(X * Ys * X - X2 * Ys * X2);
}

Vector dq_impl(const sets::PsdSpectralBall& p, const Vector& x, const Vector& d, const Vector& v) {
  const ConstMap X(x.data(), p.size, p.size);
  const ConstMap D(d.data(), p.size, p.size);
  const Matrix X2 = X * X;
  const Matrix dX2 = X * D + D * X;
  const Matrix Ys = detail::sym(ConstMap(v.data(), p.size, p.size));
  return flatten(D * Ys * X + X * Ys * D - dX2 * Ys * X2 - X2 * Ys * dX2);
}

Vector dq_adj_impl(const sets::PsdSpectralBall& p, const Vector& x, const Vector& w,
                   const Vector& v) {
  const ConstMap X(x.data(), p.size, p.size);
  const ConstMap W(w.data(), p.size, p.size);
  const Matrix X2 = X * X;
  const Matrix Ys = detail::sym(ConstMap(v.data(), p.size, p.size));
  const Matrix Xt = X.transpose();
  // <W, L D R> = <L^T W R^T, D>
  Matrix g = W * Xt * Ys + Ys * Xt * W;
  g -= Xt * W * (Ys * X2).transpose();
  g -= W * (X * Ys * X2).transpose();
  g -= (X2 * Ys * X).transpose() * W;
  g -= (X2 * Ys).transpose() * W * Xt;
  return flatten(g);
}

Vector normal_psd(Index size, const Vector& x, const Vector& v, double tol, bool upper_face) {
  const ConstMap X(x.data(), size, size);
  const ConstMap V(v.data(), size, size);
  const Matrix Vs = detail::sym(V);
  Matrix out = V - Vs;  // antisymmetric directions are orthogonal to aff(X)
  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::sym(X));
  const Vector& lam = eig.eigenvalues();
  std::vector<Index> zero_idx;
  std::vector<Index> one_idx;
  for (Index i = 0; i < lam.size(); ++i) {
    if (lam[i] <= tol) zero_idx.push_back(i);
    if (upper_face && lam[i] >= 1.0 - tol) one_idx.push_back(i);
  }
  auto columns = [&](const std::vector<Index>& idx) {
    Matrix U(size, static_cast<Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) U.col(static_cast<Index>(j)) = eig.eigenvectors().col(idx[j]);
    return U;
  };
  if (!zero_idx.empty()) {
    const Matrix U0 = columns(zero_idx);
    out -= U0 * psd_part(-(U0.transpose() * Vs * U0)) * U0.transpose();
  }
  if (!one_idx.empty()) {
    const Matrix U1 = columns(one_idx);
    out += U1 * psd_part(U1.transpose() * Vs * U1) * U1.transpose();
  }
  return flatten(out);
}

Vector normal_impl(const sets::PsdCone& p, const Vector& x, const Vector& v, double tol) {
  return normal_psd(p.size, x, v, tol, false);
}

Vector normal_impl(const sets::PsdSpectralBall& p, const Vector& x, const Vector& v, double tol) {
  return normal_psd(p.size, x, v, tol, true);
}

// ---------------------------------------------------------------- Linear inequalities

Vector project_impl(const sets::LinearInequalities& L, const Vector& x) {
  const Vector r = L.A.transpose() * x - L.b;
  if ((r.array() <= 0.0).all()) return x;
  const Vector mu = detail::nonneg_quadratic_min(L.A.transpose() * L.A, r);
  return x - L.A * mu;
}

Vector slack_plus(const sets::LinearInequalities& L, const Vector& x) {
  return (L.b - L.A.transpose() * x).cwiseMax(0.0);
}

Vector q_impl(const sets::LinearInequalities& L, const Vector& x, const Vector& v) {
  const Vector s = slack_plus(L, x);
  const Vector wm1 = s.cwiseProduct(s).array() - 1.0;
  return v + L.A_pinv.transpose() * wm1.cwiseProduct(L.A_pinv * v);
}

Vector dq_impl(const sets::LinearInequalities& L, const Vector& x, const Vector& d, const Vector& v) {
  const Vector s = slack_plus(L, x);
  const Vector dw = -2.0 * s.cwiseProduct(L.A.transpose() * d);
  return L.A_pinv.transpose() * dw.cwiseProduct(L.A_pinv * v);
}

Vector dq_adj_impl(const sets::LinearInequalities& L, const Vector& x, const Vector& w,
                   const Vector& v) {
  const Vector s = slack_plus(L, x);
  return -2.0 * L.A * s.cwiseProduct(L.A_pinv * w).cwiseProduct(L.A_pinv * v);
}

Vector normal_impl(const sets::LinearInequalities& L, const Vector& x, const Vector& v, double tol) {
  const Vector slack = L.b - L.A.transpose() * x;
  std::vector<Index> active;
  for (Index j = 0; j < slack.size(); ++j) {
    if (slack[j] <= tol) active.push_back(j);
  }
  if (active.empty()) return Vector::Zero(v.size());
  Matrix AI(L.A.rows(), static_cast<Index>(active.size()));
  for (std::size_t j = 0; j < active.size(); ++j) AI.col(static_cast<Index>(j)) = L.A.col(active[j]);
  const Vector mu = detail::nonneg_quadratic_min(AI.transpose() * AI, AI.transpose() * v);
  return AI * mu;
}

// ---------------------------------------------------------------- Dispatch helpers

template <class F>
Vector blockwise(const sets::Product& p, F&& f) {
  Index total = 0;
  for (const auto& s : p.factors) total += s.dim();
  Vector out(total);
  Index offset = 0;
  for (const auto& s : p.factors) {
    out.segment(offset, s.dim()) = f(s, offset);
    offset += s.dim();
  }
  return out;
}

Matrix symmetrizer(Index size) {
  const Index n = size * size;
  Matrix P = Matrix::Zero(n, n);
  for (Index j = 0; j < size; ++j) {
    for (Index i = 0; i < size; ++i) {
      P(i + j * size, i + j * size) += 0.5;
      P(i + j * size, j + i * size) += 0.5;
    }
  }
  return P;
}

nlohmann::json matrix_to_json(const Matrix& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------- detail

Vector detail::nonneg_quadratic_min(const Matrix& G, const Vector& r, int max_iter) {
  const Index m = r.size();
  if (max_iter <= 0) max_iter = static_cast<int>(10 * m + 50);
  const double scale = std::max(1.0, G.cwiseAbs().maxCoeff());
  const double tol = 1e-13 * scale * std::max(1.0, r.cwiseAbs().maxCoeff());
  Vector mu = Vector::Zero(m);
  std::vector<bool> passive(static_cast<std::size_t>(m), false);

  auto solve_passive = [&]() {
    std::vector<Index> idx;
    for (Index j = 0; j < m; ++j) {
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    const auto k = static_cast<Index>(idx.size());
    Matrix Gp(k, k);
    Vector rp(k);
    for (Index a = 0; a < k; ++a) {
      rp[a] = r[idx[a]];
      for (Index b = 0; b < k; ++b) Gp(a, b) = G(idx[a], idx[b]);
    }
    const Vector sp = linalg::pinv(Gp, 1e-12) * rp;
    Vector s = Vector::Zero(m);
    for (Index a = 0; a < k; ++a) s[idx[a]] = sp[a];
    return s;
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    const Vector w = r - G * mu;
    Index best = -1;
    double best_w = tol;
    for (Index j = 0; j < m; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < max_iter; ++inner) {
      const Vector s = solve_passive();
      bool feasible = true;
      double alpha = 1.0;
      for (Index j = 0; j < m; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0) {
          feasible = false;
          const double denom = mu[j] - s[j];
          if (denom > 0) alpha = std::min(alpha, mu[j] / denom);
        }
      }
      if (feasible) {
        mu = s;
        break;
      }
      mu += alpha * (s - mu);
      for (Index j = 0; j < m; ++j) {
        if (passive[static_cast<std::size_t>(j)] && mu[j] <= 1e-15) {
          passive[static_cast<std::size_t>(j)] = false;
          mu[j] = 0.0;
        }
      }
    }
  }
  return mu.cwiseMax(0.0);
}

// ---------------------------------------------------------------- ConvexSet

ConvexSet::ConvexSet(Variant v) : variant_(std::move(v)) {
  dim_ = std::visit(overloaded{
                        [](const sets::Box& b) { return b.lower.size(); },
                        [](const sets::NonnegOrthant& s) { return s.n; },
                        [](const sets::NormBall& s) { return s.n; },
                        [](const sets::Simplex& s) { return s.n; },
                        [](const sets::SecondOrderCone& s) { return s.n + 1; },
                        [](const sets::SpectralBall& s) { return s.rows * s.cols; },
                        [](const sets::PsdCone& s) { return s.size * s.size; },
                        [](const sets::PsdSpectralBall& s) { return s.size * s.size; },
                        [](const sets::LinearInequalities& s) { return s.A.rows(); },
                        [](const sets::Product& p) {
                          Index total = 0;
                          for (const auto& f : p.factors) total += f.dim();
                          return total;
                        },
                    },
                    variant_);
}

ConvexSet ConvexSet::box(Vector lower, Vector upper) {
  if (lower.size() != upper.size()) throw InvalidInput("box: lower and upper differ in size");
  for (Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i] ||
        lower[i] == kInf || upper[i] == -kInf) {
      throw InvalidInput("box: need lower <= upper componentwise");
    }
  }
  return ConvexSet(sets::Box{std::move(lower), std::move(upper)});
}

ConvexSet ConvexSet::free_space(Index n) {
  return box(Vector::Constant(n, -kInf), Vector::Constant(n, kInf));
}

ConvexSet ConvexSet::nonneg_orthant(Index n) {
  if (n < 1) throw InvalidInput("nonneg_orthant: n must be positive");
  return ConvexSet(sets::NonnegOrthant{n});
}

ConvexSet ConvexSet::norm_ball(Index n, double radius, double exponent) {
  if (n < 1) throw InvalidInput("norm_ball: n must be positive");
  if (!(radius > 0)) throw InvalidInput("norm_ball: radius must be positive");
  if (!(exponent > 1)) throw InvalidInput("norm_ball: exponent must exceed 1");
  return ConvexSet(sets::NormBall{n, radius, exponent});
}

ConvexSet ConvexSet::simplex(Index n) {
  if (n < 1) throw InvalidInput("simplex: n must be positive");
  return ConvexSet(sets::Simplex{n});
}

ConvexSet ConvexSet::second_order_cone(Index n) {
  if (n < 1) throw InvalidInput("second_order_cone: n must be positive");
  return ConvexSet(sets::SecondOrderCone{n});
}

ConvexSet ConvexSet::spectral_ball(Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw InvalidInput("spectral_ball: dimensions must be positive");
  return ConvexSet(sets::SpectralBall{rows, cols});
}

ConvexSet ConvexSet::psd_cone(Index size) {
  if (size < 1) throw InvalidInput("psd_cone: size must be positive");
  return ConvexSet(sets::PsdCone{size});
}

ConvexSet ConvexSet::psd_spectral_ball(Index size) {
  if (size < 1) throw InvalidInput("psd_spectral_ball: size must be positive");
  return ConvexSet(sets::PsdSpectralBall{size});
}

ConvexSet ConvexSet::linear_inequalities(Matrix A, Vector b) {
  if (A.cols() != b.size()) throw InvalidInput("linear_inequalities: A must be n x m with b in R^m");
  if (A.rows() < 1 || A.cols() < 1) throw InvalidInput("linear_inequalities: empty system");
  Eigen::JacobiSVD<Matrix> svd(A);
  const Vector& sig = svd.singularValues();
  const double cutoff = 1e-12 * sig[0];
  for (Index i = 0; i < sig.size(); ++i) {
    if (sig[i] > cutoff && sig[i] < 1.0 - 1e-12) {
      throw InvalidInput(
          "linear_inequalities: nonzero singular values of A must be >= 1 for a PSD projective "
          "mapping; rescale the system");
    }
  }
  Matrix pinv = linalg::pinv(A, 1e-12);
  return ConvexSet(sets::LinearInequalities{std::move(A), std::move(b), std::move(pinv)});
}

ConvexSet ConvexSet::product(std::vector<ConvexSet> factors) {
  if (factors.empty()) throw InvalidInput("product: need at least one factor");
  return ConvexSet(sets::Product{std::move(factors)});
}

std::string ConvexSet::kind() const {
  return std::visit(overloaded{
                        [](const sets::Box&) { return std::string("box"); },
                        [](const sets::NonnegOrthant&) { return std::string("nonneg_orthant"); },
                        [](const sets::NormBall&) { return std::string("norm_ball"); },
                        [](const sets::Simplex&) { return std::string("simplex"); },
                        [](const sets::SecondOrderCone&) { return std::string("second_order_cone"); },
                        [](const sets::SpectralBall&) { return std::string("spectral_ball"); },
                        [](const sets::PsdCone&) { return std::string("psd_cone"); },
                        [](const sets::PsdSpectralBall&) { return std::string("psd_spectral_ball"); },
                        [](const sets::LinearInequalities&) { return std::string("linear_inequalities"); },
                        [](const sets::Product&) { return std::string("product"); },
                    },
                    variant_);
}

Vector ConvexSet::project(const Vector& x) const {
  require_dim(x.size(), dim_, "project");
  return std::visit(overloaded{
                        [&](const sets::Product& p) {
                          return blockwise(p, [&](const ConvexSet& s, Index off) {
                            return s.project(x.segment(off, s.dim()));
                          });
                        },
                        [&](const auto& s) { return project_impl(s, x); },
                    },
                    variant_);
}

bool ConvexSet::contains(const Vector& x, double tol) const {
  require_dim(x.size(), dim_, "contains");
  if (!x.allFinite()) return false;
  return (x - project(x)).norm() <= tol;
}

void ConvexSet::check_domain(const Vector& x, const char* op) const {
  if (!contains(x, kDomainTol)) {
    throw DomainError(std::string(op) + ": point lies outside the " + kind() +
                      " set (distance exceeds tolerance)");
  }
}

Matrix ConvexSet::affine_hull_projector() const {
  return std::visit(overloaded{
                        [&](const sets::Box& b) {
                          Vector diag(dim_);
                          for (Index i = 0; i < dim_; ++i) diag[i] = b.lower[i] == b.upper[i] ? 0.0 : 1.0;
                          return Matrix(diag.asDiagonal());
                        },
                        [&](const sets::Simplex& s) {
                          return Matrix(Matrix::Identity(s.n, s.n) -
                                        Matrix::Constant(s.n, s.n, 1.0 / static_cast<double>(s.n)));
                        },
                        [&](const sets::PsdCone& p) { return symmetrizer(p.size); },
                        [&](const sets::PsdSpectralBall& p) { return symmetrizer(p.size); },
                        [&](const sets::Product& p) {
                          Matrix P = Matrix::Zero(dim_, dim_);
                          Index off = 0;
                          for (const auto& f : p.factors) {
                            P.block(off, off, f.dim(), f.dim()) = f.affine_hull_projector();
                            off += f.dim();
                          }
                          return P;
                        },
                        [&](const auto&) { return Matrix(Matrix::Identity(dim_, dim_)); },
                    },
                    variant_);
}

Vector ConvexSet::apply_affine_hull_projector(const Vector& v) const {
  require_dim(v.size(), dim_, "apply_affine_hull_projector");
  return std::visit(overloaded{
                        [&](const sets::Box& b) {
                          Vector out = v;
                          for (Index i = 0; i < dim_; ++i) {
                            if (b.lower[i] == b.upper[i]) out[i] = 0.0;
                          }
                          return out;
                        },
                        [&](const sets::Simplex&) { return Vector(v.array() - v.mean()); },
                        [&](const sets::PsdCone& p) {
                          return flatten(detail::sym(ConstMap(v.data(), p.size, p.size)));
                        },
                        [&](const sets::PsdSpectralBall& p) {
                          return flatten(detail::sym(ConstMap(v.data(), p.size, p.size)));
                        },
                        [&](const sets::Product& p) {
                          return blockwise(p, [&](const ConvexSet& s, Index off) {
                            return s.apply_affine_hull_projector(v.segment(off, s.dim()));
                          });
                        },
                        [&](const auto&) { return Vector(v); },
                    },
                    variant_);
}

Vector ConvexSet::q_apply(const Vector& x, const Vector& v, DomainCheck check) const {
  require_dim(x.size(), dim_, "q_apply");
  require_dim(v.size(), dim_, "q_apply");
  if (check == DomainCheck::enforce) check_domain(x, "q_apply");
  return std::visit(overloaded{
                        [&](const sets::Product& p) {
                          return blockwise(p, [&](const ConvexSet& s, Index off) {
                            return s.q_apply(x.segment(off, s.dim()), v.segment(off, s.dim()),
                                             DomainCheck::skip);
                          });
                        },
                        [&](const auto& s) { return q_impl(s, x, v); },
                    },
                    variant_);
}

Matrix ConvexSet::q_apply_columns(const Vector& x, const Matrix& V, DomainCheck check) const {
  require_dim(V.rows(), dim_, "q_apply_columns");
  if (check == DomainCheck::enforce) check_domain(x, "q_apply");
  Matrix out(V.rows(), V.cols());
  for (Index j = 0; j < V.cols(); ++j) out.col(j) = q_apply(x, V.col(j), DomainCheck::skip);
  return out;
}

Matrix ConvexSet::q_matrix(const Vector& x, DomainCheck check) const {
  Matrix Q = q_apply_columns(x, Matrix::Identity(dim_, dim_), check);
  return Q;
}

Vector ConvexSet::dq_apply(const Vector& x, const Vector& d, const Vector& v,
                           DomainCheck check) const {
  require_dim(x.size(), dim_, "dq_apply");
  require_dim(d.size(), dim_, "dq_apply");
  require_dim(v.size(), dim_, "dq_apply");
  if (check == DomainCheck::enforce) check_domain(x, "dq_apply");
  return std::visit(overloaded{
                        [&](const sets::Product& p) {
                          return blockwise(p, [&](const ConvexSet& s, Index off) {
                            return s.dq_apply(x.segment(off, s.dim()), d.segment(off, s.dim()),
                                              v.segment(off, s.dim()), DomainCheck::skip);
                          });
                        },
                        [&](const auto& s) { return dq_impl(s, x, d, v); },
                    },
                    variant_);
}

Vector ConvexSet::dq_adjoint(const Vector& x, const Vector& w, const Vector& v,
                             DomainCheck check) const {
  require_dim(x.size(), dim_, "dq_adjoint");
  require_dim(w.size(), dim_, "dq_adjoint");
  require_dim(v.size(), dim_, "dq_adjoint");
  if (check == DomainCheck::enforce) check_domain(x, "dq_adjoint");
  return std::visit(overloaded{
                        [&](const sets::Product& p) {
                          return blockwise(p, [&](const ConvexSet& s, Index off) {
                            return s.dq_adjoint(x.segment(off, s.dim()), w.segment(off, s.dim()),
                                                v.segment(off, s.dim()), DomainCheck::skip);
                          });
                        },
                        [&](const auto& s) { return dq_adj_impl(s, x, w, v); },
                    },
                    variant_);
}

Vector ConvexSet::project_normal_cone(const Vector& x, const Vector& v, double active_tol) const {
  require_dim(x.size(), dim_, "project_normal_cone");
  require_dim(v.size(), dim_, "project_normal_cone");
  return std::visit(overloaded{
                        [&](const sets::Product& p) {
                          return blockwise(p, [&](const ConvexSet& s, Index off) {
                            return s.project_normal_cone(x.segment(off, s.dim()),
                                                         v.segment(off, s.dim()), active_tol);
                          });
                        },
                        [&](const auto& s) { return normal_impl(s, x, v, active_tol); },
                    },
                    variant_);
}

// ---------------------------------------------------------------- JSON

nlohmann::json ConvexSet::to_json() const {
  nlohmann::json j;
  j["kind"] = kind();
  auto bound = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  std::visit(overloaded{
                 [&](const sets::Box& b) {
                   j["lower"] = nlohmann::json::array();
                   j["upper"] = nlohmann::json::array();
                   for (Index i = 0; i < b.lower.size(); ++i) {
                     j["lower"].push_back(bound(b.lower[i]));
                     j["upper"].push_back(bound(b.upper[i]));
                   }
                 },
                 [&](const sets::NonnegOrthant& s) { j["n"] = s.n; },
                 [&](const sets::NormBall& s) {
                   j["n"] = s.n;
                   j["radius"] = s.radius;
                   j["exponent"] = s.exponent;
                 },
                 [&](const sets::Simplex& s) { j["n"] = s.n; },
                 [&](const sets::SecondOrderCone& s) { j["n"] = s.n; },
                 [&](const sets::SpectralBall& s) {
                   j["rows"] = s.rows;
                   j["cols"] = s.cols;
                 },
                 [&](const sets::PsdCone& s) { j["size"] = s.size; },
                 [&](const sets::PsdSpectralBall& s) { j["size"] = s.size; },
                 [&](const sets::LinearInequalities& s) {
                   j["A"] = matrix_to_json(s.A);
                   j["b"] = std::vector<double>(s.b.data(), s.b.data() + s.b.size());
                 },
                 [&](const sets::Product& p) {
                   j["factors"] = nlohmann::json::array();
                   for (const auto& f : p.factors) j["factors"].push_back(f.to_json());
                 },
             },
             variant_);
  return j;
}

ConvexSet ConvexSet::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidInput("set json: missing \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  auto vec = [](const nlohmann::json& a, double null_value) {
    Vector v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
      v[static_cast<Index>(i)] = a[i].is_null() ? null_value : a[i].get<double>();
    }
    return v;
  };
  try {
    if (kind == "box") return box(vec(j.at("lower"), -kInf), vec(j.at("upper"), kInf));
    if (kind == "nonneg_orthant") return nonneg_orthant(j.at("n").get<Index>());
    if (kind == "norm_ball") {
      return norm_ball(j.at("n").get<Index>(), j.value("radius", 1.0), j.value("exponent", 2.0));
    }
    if (kind == "simplex") return simplex(j.at("n").get<Index>());
    if (kind == "second_order_cone") return second_order_cone(j.at("n").get<Index>());
    if (kind == "spectral_ball") return spectral_ball(j.at("rows").get<Index>(), j.at("cols").get<Index>());
    if (kind == "psd_cone") return psd_cone(j.at("size").get<Index>());
    if (kind == "psd_spectral_ball") return psd_spectral_ball(j.at("size").get<Index>());
    if (kind == "linear_inequalities") {
      const auto& rows = j.at("A");
      const auto n = static_cast<Index>(rows.size());
      const Index m = n > 0 ? static_cast<Index>(rows[0].size()) : 0;
      Matrix A(n, m);
      for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < m; ++k) A(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
      }
      return linear_inequalities(std::move(A), vec(j.at("b"), 0.0));
    }
    if (kind == "product") {
      std::vector<ConvexSet> factors;
      for (const auto& f : j.at("factors")) factors.push_back(from_json(f));
      return product(std::move(factors));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("set json: ") + e.what());
  }
  throw InvalidInput("set json: unknown kind \"" + kind + "\"");
}

}  // namespace dissolve
