#include "dissolve/dissolving_map.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "dissolve/linalg.hpp"

namespace dissolve {

namespace {

using ConstMap = Eigen::Map<const Matrix>;

Vector flatten(const Matrix& M) { return Eigen::Map<const Vector>(M.data(), M.size()); }

Vector fd_vjp(const DissolvingMap::ValueFn& value, const Vector& x, const Vector& w) {
  const double delta = std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + x.norm());
  Vector out(x.size());
  Vector xp = x;
  for (Index j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + delta;
    const Vector plus = value(xp);
    xp[j] = x[j] - delta;
    const Vector minus = value(xp);
    xp[j] = x[j];
    out[j] = w.dot(plus - minus) / (2.0 * delta);
  }
  return out;
}

class AqEngine {
 public:
  AqEngine(ConvexSet set, ConstraintMap cmap, double sigma)
      : set_(std::move(set)), cmap_(std::move(cmap)), sigma_(sigma) {}

  struct Core {
    Matrix J;
    Matrix QJ;
    Matrix M_pinv;
    Vector c;
    Vector lambda;
  };

  Core core(const Vector& x, DomainCheck check) const {
    require_dim(x.size(), set_.dim(), "A_Q");
    Core k;
    k.c = cmap_.value(x);
    k.J = cmap_.jacobian(x);
    k.QJ = set_.q_apply_columns(x, k.J, check);
    Matrix M = k.J.transpose() * k.QJ;
    M = 0.5 * (M + M.transpose());
    M.diagonal().array() += sigma_ * k.c.squaredNorm();
    if (M.cwiseAbs().maxCoeff() == 0.0 && k.c.norm() > 0.0) {
      throw NumericalError("A_Q: the regularized core vanishes at an infeasible point");
    }
    k.M_pinv = linalg::pinv(M, 1e-12);
    k.lambda = k.M_pinv * k.c;
    return k;
  }

  Vector value(const Vector& x, DomainCheck check) const {
    const Core k = core(x, check);
    return x - k.QJ * k.lambda;
  }

  Vector vjp(const Vector& x, const Vector& w) const {
    require_dim(w.size(), set_.dim(), "A_Q vjp");
    const Core k = core(x, DomainCheck::enforce);
    const auto skip = DomainCheck::skip;
    const Vector Qw = set_.q_apply(x, w, skip);
    const Vector xi = k.M_pinv * (k.J.transpose() * Qw);
    const Vector Jl = k.J * k.lambda;
    const Vector Jxi = k.J * xi;
    const Vector QJl = k.QJ * k.lambda;
    const Vector QJxi = k.QJ * xi;
    const auto& hess = cmap_.hess_apply;
    Vector grad_t = set_.dq_adjoint(x, w, Jl, skip) + hess(x, k.lambda, Qw) + Jxi -
                    hess(x, xi, QJl) - set_.dq_adjoint(x, Jxi, Jl, skip) - hess(x, k.lambda, QJxi) -
                    2.0 * sigma_ * xi.dot(k.lambda) * (k.J * k.c);
    return w - grad_t;
  }

 private:
  ConvexSet set_;
  ConstraintMap cmap_;
  double sigma_;
};

}  // namespace

std::string to_string(MapMode mode) {
  switch (mode) {
    case MapMode::identity: return "identity";
    case MapMode::closed_form: return "closed_form";
    case MapMode::generic_analytic: return "generic_analytic";
    case MapMode::generic_fd: return "generic_fd";
  }
  return "unknown";
}

MapMode map_mode_from_string(const std::string& name) {
  if (name == "identity") return MapMode::identity;
  if (name == "closed_form") return MapMode::closed_form;
  if (name == "generic_analytic" || name == "analytic") return MapMode::generic_analytic;
  if (name == "generic_fd" || name == "fd") return MapMode::generic_fd;
  throw InvalidInput("unknown map mode \"" + name + "\"");
}

Matrix DissolvingMap::jacobian(const Vector& x) const {
  Matrix grad(n, n);
  for (Index j = 0; j < n; ++j) grad.col(j) = vjp(x, Vector::Unit(n, j));
  return grad.transpose();
}

DissolvingMap identity_map(Index n) {
  DissolvingMap a;
  a.n = n;
  a.mode = MapMode::identity;
  a.value = [](const Vector& x) { return x; };
  a.value_unchecked = a.value;
  a.vjp = [](const Vector&, const Vector& w) { return w; };
  a.analytic_vjp = a.vjp;
  return a;
}

DissolvingMap build_aq(const ConvexSet& set, const ConstraintMap& cmap, double sigma,
                       std::optional<MapMode> mode) {
  require_dim(cmap.n, set.dim(), "build_aq");
  if (!(sigma > 0) || !std::isfinite(sigma)) throw InvalidInput("build_aq: sigma must be positive");
  if (cmap.p == 0) return identity_map(set.dim());
  if (mode && *mode != MapMode::generic_analytic && *mode != MapMode::generic_fd) {
    throw InvalidInput("build_aq: mode must be generic_analytic or generic_fd");
  }
  if (mode == MapMode::generic_analytic && !cmap.has_hessian()) {
    throw CapabilityError(
        "build_aq: generic_analytic needs second-order constraint products; use generic_fd");
  }
  MapMode chosen = MapMode::generic_fd;
  if (mode) {
    chosen = *mode;
  } else if (cmap.has_hessian()) {
    chosen = MapMode::generic_analytic;
  } else {
    log_warning("build_aq: constraint has no second-order products, falling back to finite differences");
  }

  auto engine = std::make_shared<const AqEngine>(set, cmap, sigma);
  DissolvingMap a;
  a.n = set.dim();
  a.mode = chosen;
  a.sigma = sigma;
  a.value = [engine](const Vector& x) { return engine->value(x, DomainCheck::enforce); };
  a.value_unchecked = [engine](const Vector& x) { return engine->value(x, DomainCheck::skip); };
  if (cmap.has_hessian()) {
    a.analytic_vjp = [engine](const Vector& x, const Vector& w) { return engine->vjp(x, w); };
  }
  if (chosen == MapMode::generic_analytic) {
    a.vjp = a.analytic_vjp;
  } else {
    a.vjp = [engine, value = a.value_unchecked, set](const Vector& x, const Vector& w) {
      if (!set.contains(x)) throw DomainError("A_Q vjp: point lies outside the set");
      return fd_vjp(value, x, w);
    };
  }
  return a;
}

Vector aq_vjp_analytic(const DissolvingMap& amap, const Vector& x, const Vector& w) {
  if (!amap.analytic_vjp) {
    throw CapabilityError(
        "aq_vjp_analytic: map lacks second-order constraint products; use generic_fd");
  }
  return amap.analytic_vjp(x, w);
}

Vector aq_vjp_fd(const DissolvingMap& amap, const Vector& x, const Vector& w) {
  require_dim(x.size(), amap.n, "aq_vjp_fd");
  require_dim(w.size(), amap.n, "aq_vjp_fd");
  return fd_vjp(amap.value_unchecked ? amap.value_unchecked : amap.value, x, w);
}

DissolvingMap closed_form_map(const std::string& kind, const ClosedFormParams& params) {
  DissolvingMap a;
  a.mode = MapMode::closed_form;
  if (kind == "sphere_nonneg") {
    Matrix H = params.H.size() > 0 ? params.H : Matrix::Identity(params.n, params.n);
    if (H.rows() != H.cols() || H.rows() < 1) throw InvalidInput("sphere_nonneg: H must be square");
    if (!H.isApprox(H.transpose(), 1e-12)) throw InvalidInput("sphere_nonneg: H must be symmetric");
    a.n = H.rows();
    a.value = [H](const Vector& x) {
      require_dim(x.size(), H.rows(), "sphere_nonneg");
      return (x * (1.5 - 0.5 * x.dot(H * x))).eval();
    };
    a.vjp = [H](const Vector& x, const Vector& w) {
      require_dim(x.size(), H.rows(), "sphere_nonneg");
      const Vector Hx = H * x;
      return ((1.5 - 0.5 * x.dot(Hx)) * w - Hx * x.dot(w)).eval();
    };
  } else if (kind == "lq_nonneg") {
    const double q = params.exponent;
    if (!(q > 1)) throw InvalidInput("lq_nonneg: exponent must exceed 1");
    if (params.n < 1) throw InvalidInput("lq_nonneg: n must be positive");
    a.n = params.n;
    auto scale = [q](const Vector& x) { return 1.0 + (x.array().abs().pow(q).sum() - 1.0) / q; };
    a.value = [scale, n = params.n](const Vector& x) {
      require_dim(x.size(), n, "lq_nonneg");
      return (x / scale(x)).eval();
    };
    a.vjp = [scale, q, n = params.n](const Vector& x, const Vector& w) {
      require_dim(x.size(), n, "lq_nonneg");
      const double s = scale(x);
      const Vector g = x.unaryExpr([q](double t) {
        return (t > 0 ? 1.0 : (t < 0 ? -1.0 : 0.0)) * std::pow(std::abs(t), q - 1.0);
      });
      return (w / s - g * (x.dot(w) / (s * s))).eval();
    };
  } else if (kind == "psd_diag") {
    const Index s = params.rows;
    if (s < 1) throw InvalidInput("psd_diag: size must be positive");
    a.n = s * s;
    a.value = [s](const Vector& x) {
      require_dim(x.size(), s * s, "psd_diag");
      const ConstMap X(x.data(), s, s);
      const Matrix T = X * (2.0 * Matrix::Identity(s, s) - Matrix(X.diagonal().asDiagonal()));
      return flatten(detail::sym(T));
    };
    a.vjp = [s](const Vector& x, const Vector& w) {
      require_dim(x.size(), s * s, "psd_diag");
      const ConstMap X(x.data(), s, s);
      const Matrix Ws = detail::sym(ConstMap(w.data(), s, s));
      Matrix G = Ws * (2.0 * Matrix::Identity(s, s) - Matrix(X.diagonal().asDiagonal()));
      G.diagonal() -= (X.transpose() * Ws).diagonal();
      return flatten(G);
    };
  } else if (kind == "nonneg_orthonormal_diag") {
    const Index r = params.rows;
    const Index c = params.cols;
    if (r < 1 || c < 1) throw InvalidInput("nonneg_orthonormal_diag: dimensions must be positive");
    a.n = r * c;
    a.value = [r, c](const Vector& x) {
      require_dim(x.size(), r * c, "nonneg_orthonormal_diag");
      const ConstMap X(x.data(), r, c);
      const Vector N = X.colwise().squaredNorm().transpose().array() - 1.0;
      return flatten(X - 0.5 * X * N.asDiagonal());
    };
    a.vjp = [r, c](const Vector& x, const Vector& w) {
      require_dim(x.size(), r * c, "nonneg_orthonormal_diag");
      const ConstMap X(x.data(), r, c);
      const ConstMap W(w.data(), r, c);
      const Vector N = X.colwise().squaredNorm().transpose().array() - 1.0;
      const Vector XtW = X.cwiseProduct(W).colwise().sum().transpose();
      return flatten(W - 0.5 * W * N.asDiagonal() - X * XtW.asDiagonal());
    };
  } else {
    throw InvalidInput("closed_form_map: unknown kind \"" + kind + "\"");
  }
  a.value_unchecked = a.value;
  a.analytic_vjp = a.vjp;
  return a;
}

}  // namespace dissolve
