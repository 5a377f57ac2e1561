#include <cmath>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "dissolve/diagnostics.hpp"
#include "dissolve/problems.hpp"

using namespace dissolve;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<Vector> sphere_points(Index n, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> pts;
  for (int i = 0; i < count; ++i) pts.push_back(rng.normal_vector(n).cwiseAbs().normalized());
  return pts;
}

DissolvingMap shifted_map(Index n, std::function<Vector(const Vector&)> shift) {
  DissolvingMap a = identity_map(n);
  a.mode = MapMode::closed_form;
  a.value = [shift](const Vector& x) { return Vector(x + shift(x)); };
  a.value_unchecked = a.value;
  a.analytic_vjp = nullptr;
  a.vjp = [a](const Vector& x, const Vector& w) { return aq_vjp_fd(a, x, w); };
  return a;
}

ConstraintMap squared_sphere() {
  const ConstraintMap s = sphere_constraint(Matrix::Identity(2, 2));
  ConstraintMap c;
  c.n = 2;
  c.p = 1;
  c.value = [s](const Vector& x) { return Vector(s.value(x).array().square()); };
  c.jac_t_apply = [s](const Vector& x, const Vector& v) { return s.jac_t_apply(x, 2.0 * s.value(x)[0] * v); };
  c.jac_apply = [s](const Vector& x, const Vector& d) { return Vector(2.0 * s.value(x)[0] * s.jac_apply(x, d)); };
  return c;
}

ConstraintMap duplicated_sphere() {
  const ConstraintMap s = sphere_constraint(Matrix::Identity(2, 2));
  ConstraintMap c;
  c.n = 2;
  c.p = 2;
  c.value = [s](const Vector& x) { return Vector::Constant(2, s.value(x)[0]).eval(); };
  c.jac_t_apply = [s](const Vector& x, const Vector& v) { return s.jac_t_apply(x, Vector::Constant(1, v.sum())); };
  c.jac_apply = [s](const Vector& x, const Vector& d) { return Vector::Constant(2, s.jac_apply(x, d)[0]).eval(); };
  return c;
}

}  // namespace

TEST(GradCheck, QuadraticWithAffineConstraint) {
  Rng rng(1);
  const Matrix H = Matrix::Identity(3, 3) + 0.1 * Matrix::Ones(3, 3);
  const ConvexSet X = ConvexSet::free_space(3);
  const ConstraintMap c = affine_constraint(vec({1, 1, 1}), vec({1}));
  PenaltyProblem prob{Objective{3, [H](const Vector& x) { return 0.5 * x.dot(H * x); },
                                [H](const Vector& x) { return Vector(H * x); }},
                      c, build_aq(X, c), X, 3.0};
  std::vector<Vector> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(rng.normal_vector(3));
  const CheckReport r = grad_check(prob, pts);
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.worst_violation, 1e-9);
  EXPECT_EQ(r.samples, 20);
}

TEST(GradCheck, DetectsWrongGradient) {
  PenaltyProblem prob{Objective{2, [](const Vector& x) { return std::sin(x[0]) * x[1]; },
                                [](const Vector& x) { return vec({std::cos(x[0]) * x[1], std::sin(x[0])}); }},
                      no_constraints(2), identity_map(2), ConvexSet::free_space(2), 0.0};
  const std::vector<Vector> pts = {vec({0.3, 0.7}), vec({-1.2, 0.4})};
  EXPECT_TRUE(grad_check(prob, pts).passed);
  prob.f.grad = [](const Vector& x) { return vec({std::cos(x[0]) * x[1], 1.01 * std::sin(x[0])}); };
  const CheckReport bad = grad_check(prob, pts);
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.worst_violation, 1e-4);
}

TEST(GradCheck, BenchmarkFamiliesPass) {
  set_warnings_enabled(false);
  for (const auto& g : {gen_npca(20, 10, 0.1, 0), gen_qpb(20, 0.5, 0), gen_fpca(6, 2, 2, 0)}) {
    const CheckReport r = grad_check(g.problem, neighborhood_points(g.instance, 20, 2));
    EXPECT_TRUE(r.passed) << to_string(g.instance.family) << " " << r.worst_violation;
  }
  set_warnings_enabled(true);
}

TEST(AssumptionA, SphereNonnegPasses) {
  ClosedFormParams p;
  p.n = 4;
  const CheckReport r = assumption_a_check(closed_form_map("sphere_nonneg", p), sphere_constraint(Matrix::Identity(4, 4)),
                                           ConvexSet::nonneg_orthant(4), sphere_points(4, 50, 3));
  EXPECT_TRUE(r.passed) << r.worst_violation;
  EXPECT_EQ(r.samples, 50);
  EXPECT_DOUBLE_EQ(r.threshold, 1.0);
}

TEST(AssumptionA, CorruptedMapsAreCaught) {
  const ConstraintMap c = sphere_constraint(Matrix::Identity(3, 3));
  const ConvexSet X = ConvexSet::nonneg_orthant(3);
  const auto pts = sphere_points(3, 10, 4);

  // Still fixes K, but the kernel property fails.
  const auto on_k = shifted_map(3, [c](const Vector& x) { return Vector(1e-3 * c.value(x)[0] * Vector::Ones(3)); });
  const CheckReport a = assumption_a_check(on_k, c, X, pts);
  EXPECT_FALSE(a.passed);
  for (const auto& d : a.details) EXPECT_LE(d.at("fixed_point").get<double>(), 1e-10);

  const auto off_k = shifted_map(3, [](const Vector&) { return Vector(1e-3 * Vector::Ones(3)); });
  const CheckReport b = assumption_a_check(off_k, c, X, pts);
  EXPECT_FALSE(b.passed);
  for (const auto& d : b.details) EXPECT_NEAR(d.at("fixed_point").get<double>(), 1e-3, 1e-12);
}

TEST(AssumptionA, NoConstraintsIsVacuous) {
  const CheckReport r = assumption_a_check(identity_map(3), no_constraints(3), ConvexSet::free_space(3),
                                           {vec({1, 2, 3})});
  EXPECT_TRUE(r.passed);
  EXPECT_FALSE(r.notices.empty());
}

TEST(AssumptionA, SkipsIdempotencyInHighDimension) {
  ClosedFormParams p;
  p.n = 201;
  const CheckReport r = assumption_a_check(closed_form_map("sphere_nonneg", p), sphere_constraint(Matrix::Identity(201, 201)),
                                           ConvexSet::nonneg_orthant(201), sphere_points(201, 2, 5), 0, 2);
  EXPECT_TRUE(r.passed);
  ASSERT_EQ(r.notices.size(), 1u);
  EXPECT_NE(r.notices[0].find("idempotency"), std::string::npos);
  EXPECT_FALSE(r.details[0].contains("idempotency"));
}

TEST(AssumptionA, RejectsInfeasiblePoints) {
  ClosedFormParams p;
  p.n = 2;
  EXPECT_THROW(assumption_a_check(closed_form_map("sphere_nonneg", p), sphere_constraint(Matrix::Identity(2, 2)),
                                  ConvexSet::nonneg_orthant(2), {vec({0.5, 0.5})}),
               DomainError);
}

TEST(PiSigma, SphereExample) {
  const ConstraintMap c = sphere_constraint(Matrix::Identity(2, 2));
  EXPECT_NEAR(pi_sigma(c, ConvexSet::free_space(2), vec({1, 0}), 1), 2.0, 1e-14);
  EXPECT_EQ(constraint_rank(c, ConvexSet::free_space(2), vec({1, 0})), 1);
  EXPECT_THROW(pi_sigma(c, ConvexSet::free_space(2), vec({1, 0}), 2), InvalidInput);
  EXPECT_THROW(pi_sigma(c, ConvexSet::free_space(2), vec({1, 0}), 0), InvalidInput);
}

TEST(PiSigma, DuplicatedConstraintsAreRankDeficient) {
  const ConstraintMap c = duplicated_sphere();
  const Vector x = vec({0.6, 0.8});
  EXPECT_LT(pi_sigma(c, ConvexSet::free_space(2), x, 2), 1e-14);
  EXPECT_EQ(constraint_rank(c, ConvexSet::free_space(2), x), 1);
}

TEST(PiSigma, SimplexProjectsOutOnesDirection) {
  Rng rng(6);
  const Matrix A = rng.normal_matrix(4, 2);
  const ConvexSet X = ConvexSet::simplex(4);
  const ConstraintMap c = affine_constraint(A, Vector::Zero(2));
  const Matrix PA = (Matrix::Identity(4, 4) - Matrix::Constant(4, 4, 0.25)) * A;
  const Vector sv = Eigen::JacobiSVD<Matrix>(PA).singularValues();
  const Vector x = Vector::Constant(4, 0.25);
  EXPECT_NEAR(pi_sigma(c, X, x, 1), sv[0], 1e-12);
  EXPECT_NEAR(pi_sigma(c, X, x, 2), sv[1], 1e-12);
}

TEST(ErrorBound, AffineHoldsAtEveryRadius) {
  Rng rng(7);
  const ConstraintMap c = affine_constraint(rng.normal_matrix(3, 2), Vector::Zero(2));
  const CheckReport r = local_error_bound_probe(c, ConvexSet::free_space(3), Vector::Zero(3), 50, 1);
  EXPECT_TRUE(r.passed);
  EXPECT_DOUBLE_EQ(r.details[0].at("held_radius").get<double>(), 1e-1);
}

TEST(ErrorBound, SphereHolds) {
  const ConstraintMap c = sphere_constraint(Matrix::Identity(3, 3));
  const CheckReport r = local_error_bound_probe(c, ConvexSet::free_space(3), vec({0, 0.6, 0.8}), 200, 2);
  EXPECT_TRUE(r.passed);
  EXPECT_GE(r.details[0].at("held_radius").get<double>(), 1e-1);
}

TEST(ErrorBound, DegenerateConstraintFailsAtRadiusZero) {
  const CheckReport r = local_error_bound_probe(squared_sphere(), ConvexSet::free_space(2), vec({1, 0}), 20, 3, 1);
  EXPECT_FALSE(r.passed);
  EXPECT_DOUBLE_EQ(r.details[0].at("held_radius").get<double>(), 0.0);
  EXPECT_EQ(r.to_json().at("worst_violation"), "inf");
}

TEST(QMapping, ReproducibleReports) {
  const ConvexSet X = ConvexSet::second_order_cone(3);
  const CheckReport a = q_mapping_check(X, 20, 4), b = q_mapping_check(X, 20, 4);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_TRUE(a.passed);
  EXPECT_EQ(a.passed, a.worst_violation <= a.threshold);
}

TEST(QMapping, RandomPointsLieInSet) {
  Rng rng(8);
  const ConvexSet X = ConvexSet::psd_spectral_ball(3);
  for (int i = 0; i < 20; ++i) EXPECT_TRUE(X.contains(random_point(X, rng)));
}

TEST(Reports, JsonShape) {
  ClosedFormParams p;
  p.n = 3;
  const auto j = assumption_a_check(closed_form_map("sphere_nonneg", p), sphere_constraint(Matrix::Identity(3, 3)),
                                    ConvexSet::nonneg_orthant(3), sphere_points(3, 2, 9))
                     .to_json();
  for (const char* key : {"check_name", "samples", "worst_violation", "threshold", "passed", "details", "notices"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j.at("check_name"), "assumption_a_check");
}
