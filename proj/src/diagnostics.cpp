#include "dissolve/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "dissolve/linalg.hpp"

namespace dissolve {

namespace {

constexpr double kFixedPointTol = 1e-10;
constexpr double kKernelTol = 1e-8;
constexpr double kIdempotencyTol = 1e-6;
constexpr Index kJacobianGuard = 200;
constexpr double kEps = std::numeric_limits<double>::epsilon();

double fd_step(const Vector& x) {
  return std::cbrt(kEps) * (1.0 + x.norm());
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), std::numeric_limits<double>::min()});
  return (a - b).norm() / scale;
}

Matrix projected_jacobian(const ConstraintMap& cmap, const ConvexSet& set, const Vector& x) {
  const Matrix J = cmap.jacobian(x);
  Matrix PJ(J.rows(), J.cols());
  for (Index i = 0; i < J.cols(); ++i) PJ.col(i) = set.apply_affine_hull_projector(J.col(i));
  return PJ;
}

void finish(CheckReport& r) { r.passed = r.worst_violation <= r.threshold; }

}  // namespace

nlohmann::json CheckReport::to_json() const {
  nlohmann::json j;
  j["check_name"] = check_name;
  j["samples"] = samples;
  j["worst_violation"] = std::isfinite(worst_violation) ? nlohmann::json(worst_violation)
                                                        : nlohmann::json("inf");
  j["threshold"] = threshold;
  j["passed"] = passed;
  j["details"] = details;
  j["notices"] = notices;
  return j;
}

CheckReport grad_check(const PenaltyProblem& prob, const std::vector<Vector>& points, double threshold) {
  CheckReport r;
  r.check_name = "grad_check";
  r.threshold = threshold;
  for (const Vector& x : points) {
    require_dim(x.size(), prob.dim(), "grad_check");
    const Vector g = h_grad(prob, x);
    const double delta = fd_step(x);
    Vector fd(x.size());
    Vector xp = x;
    for (Index j = 0; j < x.size(); ++j) {
      xp[j] = x[j] + delta;
      const double hp = h_value(prob, xp);
      xp[j] = x[j] - delta;
      const double hm = h_value(prob, xp);
      xp[j] = x[j];
      fd[j] = (hp - hm) / (2.0 * delta);
    }
    const double err = relative_error(g, fd);
    r.details.push_back({{"relative_error", err}, {"grad_norm", g.norm()}});
    r.worst_violation = std::max(r.worst_violation, err);
    ++r.samples;
  }
  finish(r);
  return r;
}

CheckReport assumption_a_check(const DissolvingMap& amap, const ConstraintMap& cmap,
                               const ConvexSet& set, const std::vector<Vector>& feasible_points,
                               std::uint64_t seed, int lambda_samples) {
  CheckReport r;
  r.check_name = "assumption_a_check";
  r.threshold = 1.0;
  const Index n = set.dim();
  if (cmap.p == 0) {
    r.samples = static_cast<int>(feasible_points.size());
    r.notices.push_back("no constraints: vacuous pass");
    finish(r);
    return r;
  }
  const bool idempotency = n <= kJacobianGuard;
  if (!idempotency) {
    r.notices.push_back("idempotency sub-check skipped: dimension " + std::to_string(n) + " exceeds " +
                        std::to_string(kJacobianGuard));
  }
  Rng rng(seed, 0xa11ULL);
  for (const Vector& x : feasible_points) {
    require_dim(x.size(), n, "assumption_a_check");
    if (cmap.value(x).norm() > kFixedPointTol || !set.contains(x)) {
      throw DomainError("assumption_a_check: sample point is not feasible");
    }
    const double fixed = (amap.value(x) - x).lpNorm<Eigen::Infinity>();
    double kernel = 0.0;
    for (int s = 0; s < lambda_samples; ++s) {
      const Vector lam = rng.normal_vector(cmap.p);
      kernel = std::max(kernel, amap.vjp(x, cmap.jac_t_apply(x, lam)).norm() / lam.norm());
    }
    nlohmann::json rec = {{"fixed_point", fixed}, {"kernel", kernel}};
    double worst = std::max(fixed / kFixedPointTol, kernel / kKernelTol);
    if (idempotency) {
      const Matrix J = amap.jacobian(x);
      const Matrix D = J * J - J;
      Matrix PD(n, n);
      for (Index j = 0; j < n; ++j) PD.col(j) = set.apply_affine_hull_projector(D.col(j));
      const double idem = PD.norm();
      rec["idempotency"] = idem;
      worst = std::max(worst, idem / kIdempotencyTol);
    }
    r.details.push_back(std::move(rec));
    r.worst_violation = std::max(r.worst_violation, worst);
    ++r.samples;
  }
  finish(r);
  return r;
}

double pi_sigma(const ConstraintMap& cmap, const ConvexSet& set, const Vector& x, Index r) {
  require_dim(x.size(), set.dim(), "pi_sigma");
  if (r < 1 || r > std::min(set.dim(), cmap.p)) {
    throw InvalidInput("pi_sigma: r must lie in [1, min(n, p)]");
  }
  return linalg::singular_values(projected_jacobian(cmap, set, x))[r - 1];
}

Index constraint_rank(const ConstraintMap& cmap, const ConvexSet& set, const Vector& x) {
  if (cmap.p == 0) return 0;
  return linalg::numerical_rank(projected_jacobian(cmap, set, x), 1e-10);
}

CheckReport local_error_bound_probe(const ConstraintMap& cmap, const ConvexSet& set,
                                    const Vector& x, int n_samples, std::uint64_t seed,
                                    std::optional<Index> r_opt) {
  CheckReport rep;
  rep.check_name = "local_error_bound_probe";
  rep.threshold = 1.0;
  require_dim(x.size(), set.dim(), "local_error_bound_probe");
  if (cmap.p == 0) {
    rep.notices.push_back("no constraints: vacuous pass");
    rep.details.push_back({{"held_radius", 1e-1}});
    finish(rep);
    return rep;
  }
  const Matrix PJ = projected_jacobian(cmap, set, x);
  const Vector sv = linalg::singular_values(PJ);
  const double scale = std::max(1.0, sv.size() > 0 ? sv[0] : 0.0);
  Index r = r_opt.value_or(linalg::numerical_rank(PJ, 1e-10));
  double pi = 0.0;
  if (r >= 1) {
    if (r > sv.size()) throw InvalidInput("local_error_bound_probe: r exceeds min(n, p)");
    pi = sv[r - 1];
  }
  if (!(pi > 1e-12 * scale)) {
    rep.worst_violation = std::numeric_limits<double>::infinity();
    rep.notices.push_back("pi(x) vanishes: the constraint qualification fails at x");
    rep.details.push_back({{"held_radius", 0.0}, {"pi", pi}, {"rank", r}});
    finish(rep);
    return rep;
  }
  Rng rng(seed, 0xeb0ULL);
  const std::vector<double> radii{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  std::vector<double> ratio_at(radii.size(), 0.0);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    for (int s = 0; s < n_samples; ++s) {
      Vector u = set.apply_affine_hull_projector(rng.normal_vector(x.size()));
      const double un = u.norm();
      if (un == 0.0) continue;
      const Vector y = x + radii[k] * (u / un);
      const Vector c = cmap.value(y);
      const double cn = c.norm();
      if (cn == 0.0) continue;
      const double lhs = set.apply_affine_hull_projector(cmap.jac_t_apply(y, c)).norm();
      ratio_at[k] = std::max(ratio_at[k], (0.5 * pi * cn) / std::max(lhs, std::numeric_limits<double>::min()));
      ++rep.samples;
    }
  }
  double held = 0.0;
  for (std::size_t k = radii.size(); k-- > 0;) {
    if (ratio_at[k] > 1.0) break;
    held = radii[k];
  }
  rep.worst_violation = ratio_at.back();
  nlohmann::json per_radius = nlohmann::json::array();
  for (std::size_t k = 0; k < radii.size(); ++k) {
    per_radius.push_back({{"radius", radii[k]}, {"worst_ratio", ratio_at[k]}});
  }
  rep.details.push_back({{"held_radius", held}, {"pi", pi}, {"rank", r}, {"radii", per_radius}});
  finish(rep);
  return rep;
}

Vector random_point(const ConvexSet& set, Rng& rng) {
  const double scale = 0.2 + 2.8 * rng.uniform();
  return set.project(scale * rng.normal_vector(set.dim()));
}

CheckReport q_mapping_check(const ConvexSet& set, int samples, std::uint64_t seed) {
  CheckReport r;
  r.check_name = "q_mapping_check:" + set.kind();
  r.threshold = 1.0;
  Rng rng(seed, 0x0717ULL);
  const auto skip = DomainCheck::skip;
  for (int s = 0; s < samples; ++s) {
    const Vector x = random_point(set, rng);
    const Matrix Q = set.q_matrix(x);
    const double qscale = std::max(1.0, Q.cwiseAbs().maxCoeff());
    const double asym = (Q - Q.transpose()).cwiseAbs().maxCoeff() / qscale;
    const Matrix Qs = 0.5 * (Q + Q.transpose());
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(Qs, Eigen::EigenvaluesOnly).eigenvalues()[0];
    const double neg = std::max(0.0, -min_eig) / qscale;

    const Vector d = rng.normal_vector(x.size());
    const Vector v = rng.normal_vector(x.size());
    // Central differences are only first-order accurate across the kinks of max(., 0)^2
    // (linear inequalities), so the oracle keeps the better of two standard step sizes.
    const Vector an = set.dq_apply(x, d, v);
    double derr = std::numeric_limits<double>::infinity();
    for (const double base : {std::cbrt(kEps), std::sqrt(kEps)}) {
      const double delta = base * (1.0 + x.norm());
      const Vector fd =
          (set.q_apply(x + delta * d, v, skip) - set.q_apply(x - delta * d, v, skip)) / (2.0 * delta);
      derr = std::min(derr, (an - fd).norm() / std::max({1.0, an.norm(), fd.norm()}));
    }

    const double worst = std::max({asym / 1e-12, neg / 1e-10, derr / 1e-6});
    r.details.push_back({{"asymmetry", asym}, {"min_eigenvalue", min_eig}, {"dq_error", derr}});
    r.worst_violation = std::max(r.worst_violation, worst);
    ++r.samples;
  }
  finish(r);
  return r;
}

}  // namespace dissolve
