#include <cmath>
#include <cstring>
#include <limits>

#include <gtest/gtest.h>

#include "dissolve/problems.hpp"
#include "dissolve/rng.hpp"
#include "dissolve/solvers.hpp"

using namespace dissolve;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

PenaltyProblem unconstrained(const Matrix& H, const Vector& b, ConvexSet set) {
  const Index n = H.rows();
  return PenaltyProblem{
      Objective{n, [H, b](const Vector& x) { return 0.5 * x.dot(H * x) - b.dot(x); },
                [H, b](const Vector& x) { return Vector(H * x - b); }},
      no_constraints(n), identity_map(n), std::move(set), 0.0};
}

PenaltyProblem free_half_norm(Index n) {
  return unconstrained(Matrix::Identity(n, n), Vector::Zero(n),
                       ConvexSet::box(Vector::Constant(n, -kInf), Vector::Constant(n, kInf)));
}

PenaltyProblem convex_box_qp(Index n, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix M = rng.normal_matrix(n, n);
  const Matrix H = M.transpose() * M / static_cast<double>(n) + 0.1 * Matrix::Identity(n, n);
  return unconstrained(H, 2.0 * rng.normal_vector(n),
                       ConvexSet::box(Vector::Constant(n, -0.5), Vector::Constant(n, 0.5)));
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(ProjectedGradient, ExactStepConvergesImmediately) {
  SolverConfig cfg;
  cfg.step_rule = StepRule::fixed;
  cfg.eta = 1.0;
  const auto r = projected_gradient(free_half_norm(2), vec({1, 1}), cfg);
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_EQ(r.iters, 1);
  EXPECT_LT(r.x_final.norm(), 1e-15);
  EXPECT_EQ(r.trace.size(), 2u);
}

TEST(ProjectedGradient, StationaryStartTakesNoSteps) {
  SolverConfig cfg;
  const auto prob = convex_box_qp(10, 1);
  cfg.tol_stat = 1e-12;
  const auto first = pg_bb(prob, Vector::Zero(10), cfg);
  ASSERT_EQ(first.status, SolveStatus::converged);
  for (StepRule rule : {StepRule::fixed, StepRule::bb_nonmonotone}) {
    cfg.step_rule = rule;
    cfg.tol_stat = 1e-6;
    const auto again = solve(prob, first.x_final, cfg);
    EXPECT_EQ(again.iters, 0);
    EXPECT_EQ(again.status, SolveStatus::converged);
    EXPECT_EQ(again.trace.size(), 1u);
  }
}

TEST(ProjectedGradient, EstimatedStepConverges) {
  SolverConfig cfg;
  cfg.step_rule = StepRule::fixed;
  cfg.max_iter = 20000;
  const auto r = solve(convex_box_qp(20, 2), Vector::Zero(20), cfg);
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_LE(r.stat, 1e-6);
}

TEST(PgBb, ConvexBoxQuadraticReachesTightTolerance) {
  SolverConfig cfg;
  cfg.tol_stat = 1e-10;
  const auto r = pg_bb(convex_box_qp(50, 0), Vector::Zero(50), cfg);
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_LE(r.stat, 1e-10);
  EXPECT_LE(r.iters, 200);
}

TEST(PgBb, BitwiseDeterministic) {
  const auto g = gen_npca(30, 15, 0.1, 4);
  SolverConfig cfg;
  const auto a = pg_bb(g.problem, g.instance.x0, cfg);
  const auto b = pg_bb(g.problem, g.instance.x0, cfg);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_TRUE(same_bits(a.trace[i].h, b.trace[i].h));
    EXPECT_TRUE(same_bits(a.trace[i].stat, b.trace[i].stat));
    EXPECT_TRUE(same_bits(a.trace[i].step, b.trace[i].step));
  }
  EXPECT_TRUE(a.x_final == b.x_final);
}

TEST(PgBb, NonFiniteObjectiveReportsNumericalFailure) {
  auto prob = free_half_norm(2);
  prob.f.value = [](const Vector& x) { return x[0] > 0.5 ? std::nan("") : 0.5 * x.squaredNorm(); };
  const auto r = pg_bb(prob, vec({1, 1}), SolverConfig{});
  EXPECT_EQ(r.status, SolveStatus::numerical_failure);
}

TEST(PgBb, WrongGradientExhaustsLineSearch) {
  auto prob = free_half_norm(2);
  prob.f.grad = [](const Vector& x) { return Vector(-x); };
  SolverConfig cfg;
  cfg.max_backtracks = 5;
  const Vector x0 = vec({1, 1});
  const auto r = pg_bb(prob, x0, cfg);
  EXPECT_EQ(r.status, SolveStatus::line_search_failure);
  EXPECT_LE(r.h_val, h_value(prob, x0));
}

TEST(PgBb, StepNormIsCapped) {
  const auto g = gen_npca(40, 20, 0.0, 3);
  SolverConfig cfg;
  Vector x = g.instance.x0;
  cfg.max_iter = 1;
  cfg.max_step_norm = 0.25;
  for (int k = 0; k < 10; ++k) {
    const auto r = pg_bb(g.problem, x, cfg);
    EXPECT_LE((r.x_final - x).norm(), 0.25 + 1e-12);
    x = r.x_final;
  }
}

TEST(Solver, RejectsStartOutsideSet) {
  const auto prob = convex_box_qp(3, 0);
  EXPECT_THROW(pg_bb(prob, Vector::Constant(3, 2.0), SolverConfig{}), DomainError);
}

TEST(Solver, ConfigValidation) {
  SolverConfig cfg;
  cfg.tol_stat = 0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = SolverConfig{};
  cfg.backtrack_factor = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = SolverConfig{};
  cfg.alpha_min = 2 * cfg.alpha_max;
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(Solver, ContinuationRaisesBetaWhenFeasibilityStalls) {
  const auto g = gen_qpb(20, 0.5, 1, 1e-3);
  SolverConfig cfg;
  cfg.beta_schedule.kind = BetaSchedule::Kind::continuation;
  cfg.beta_schedule.window = 20;
  cfg.max_iter = 2000;
  const auto r = pg_bb(g.problem, g.instance.x0, cfg);
  EXPECT_GE(r.beta_final, 1e-3);
  SolverConfig fixed;
  fixed.max_iter = 2000;
  EXPECT_EQ(pg_bb(g.problem, g.instance.x0, fixed).beta_final, 1e-3);
}

TEST(Measures, StationarityExamples) {
  const auto prob = free_half_norm(3);
  EXPECT_EQ(stationarity_measure(prob, Vector::Zero(3)), 0.0);
  const auto inside = unconstrained(Matrix::Identity(2, 2), vec({0.1, 0.0}), ConvexSet::norm_ball(2));
  const Vector x = vec({0.2, 0.1});
  const Vector g = h_grad(inside, x);
  EXPECT_NEAR(stationarity_measure(inside, x), g.norm() / (1 + x.norm()), 1e-15);
  EXPECT_NEAR(stationarity_from_grad(inside.set, x, g), g.norm() / (1 + x.norm()), 1e-15);
}

TEST(Measures, FeasibilityExample) {
  auto prob = unconstrained(Matrix::Identity(2, 2), Vector::Zero(2), ConvexSet::norm_ball(2));
  prob.cmap = shifted_sphere_constraint(vec({0.5, 0}));
  prob.amap = build_aq(prob.set, prob.cmap);
  EXPECT_NEAR(feasibility_measure(prob, Vector::Zero(2)), 0.75, 1e-15);
  EXPECT_NEAR(feasibility_measure(prob, vec({0.5 + std::cos(2.0), std::sin(2.0)})), 0.0, 1e-15);
}

TEST(Measures, KktResidualUnconstrainedIsGradientNorm) {
  const auto prob = unconstrained(Matrix::Identity(2, 2), vec({1, 2}), ConvexSet::free_space(2));
  const Vector x = vec({0.3, -0.2});
  EXPECT_NEAR(kkt_residual_original(prob, x), (x - vec({1, 2})).norm(), 1e-14);
}

TEST(Measures, KktResidualVanishesAtKktPoint) {
  // min -x0 on the unit circle inside the orthant: x* = e0, multiplier 1/2.
  PenaltyProblem prob{Objective{2, [](const Vector& x) { return -x[0]; },
                                [](const Vector&) { return vec({-1, 0}); }},
                      sphere_constraint(Matrix::Identity(2, 2)), identity_map(2),
                      ConvexSet::nonneg_orthant(2), 1.0};
  EXPECT_LE(kkt_residual_original(prob, vec({1, 0})), 1e-10);
  // min x1 on the same circle: the optimum e0 needs the normal cone of the orthant.
  prob.f = Objective{2, [](const Vector& x) { return x[1]; }, [](const Vector&) { return vec({0, 1}); }};
  EXPECT_LE(kkt_residual_original(prob, vec({1, 0})), 1e-10);
  EXPECT_GT(kkt_residual_original(prob, vec({0.6, 0.8})), 0.1);
}

TEST(Measures, LipschitzEstimateOfQuadratic) {
  Matrix H = Matrix::Zero(3, 3);
  H.diagonal() << 1, 4, 9;
  const auto prob = unconstrained(H, Vector::Zero(3), ConvexSet::free_space(3));
  const double L = estimate_lipschitz(prob, vec({0.1, 0.2, 0.3}), 50);
  EXPECT_GT(L, 9.0 * 0.9);
  EXPECT_LT(L, 9.0 * 1.1);
}

TEST(Measures, KktTransfersFromConvergedNpca) {
  for (std::uint64_t seed : {0, 1}) {
    const auto g = gen_npca(40, 20, 0.1, seed);
    const auto r = pg_bb(g.problem, g.instance.x0, SolverConfig{});
    ASSERT_EQ(r.status, SolveStatus::converged);
    EXPECT_LE(kkt_residual_original(g.problem, r.x_final), 2 * r.stat + 1e-8);
  }
}

TEST(Measures, StatusNames) {
  EXPECT_EQ(to_string(SolveStatus::converged), "converged");
  EXPECT_EQ(to_string(SolveStatus::line_search_failure), "line_search_failure");
  EXPECT_EQ(to_string(StepRule::bb_nonmonotone), "bb_nonmonotone");
}
