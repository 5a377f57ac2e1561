#pragma once

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dissolve/types.hpp"

namespace dissolve {

class ConvexSet;

namespace sets {

/// {x : lower <= x <= upper}; infinite entries mean the side is unbounded.
struct Box {
  Vector lower;
  Vector upper;
};

struct NonnegOrthant {
  Index n = 0;
};

/// {x : ||x||_q <= radius}. exponent == 2 uses the Euclidean projective mapping.
struct NormBall {
  Index n = 0;
  double radius = 1.0;
  double exponent = 2.0;
};

struct Simplex {
  Index n = 0;
};

/// {(x, y) in R^n x R : ||x|| <= y}, stored as an (n + 1)-vector with y last.
struct SecondOrderCone {
  Index n = 0;
};

/// {X in R^{rows x cols} : ||X||_2 <= 1}, column-major flattened.
struct SpectralBall {
  Index rows = 0;
  Index cols = 0;
};

/// {X in R^{size x size} : X symmetric PSD}, column-major flattened.
struct PsdCone {
  Index size = 0;
};

/// {X PSD : ||X||_2 <= 1}, column-major flattened.
struct PsdSpectralBall {
  Index size = 0;
};

/// {x : A^T x <= b} with A of size n x m. The nonzero singular values of A must be >= 1,
/// otherwise the projective mapping below is not positive semidefinite.
struct LinearInequalities {
  Matrix A;
  Vector b;
  Matrix A_pinv;  // m x n, cached
};

/// Cartesian product; the ambient vector is the concatenation of the factors.
struct Product {
  std::vector<ConvexSet> factors;
};

}  // namespace sets

enum class DomainCheck { enforce, skip };

/// A closed convex set from the built-in catalog. Immutable after construction.
///
/// Besides the Euclidean projection every set carries its projective mapping Q(x): a smooth
/// PSD-valued map whose null space at x spans the normal cone of the set at x. Q, its
/// directional derivative and the adjoint of that derivative are the ingredients of the
/// generic constraint dissolving mapping in dissolving_map.hpp.
class ConvexSet {
 public:
  using Variant = std::variant<sets::Box, sets::NonnegOrthant, sets::NormBall, sets::Simplex,
                               sets::SecondOrderCone, sets::SpectralBall, sets::PsdCone,
                               sets::PsdSpectralBall, sets::LinearInequalities, sets::Product>;

  static ConvexSet box(Vector lower, Vector upper);
  static ConvexSet free_space(Index n);
  static ConvexSet nonneg_orthant(Index n);
  static ConvexSet norm_ball(Index n, double radius = 1.0, double exponent = 2.0);
  static ConvexSet simplex(Index n);
  static ConvexSet second_order_cone(Index n);
  static ConvexSet spectral_ball(Index rows, Index cols);
  static ConvexSet psd_cone(Index size);
  static ConvexSet psd_spectral_ball(Index size);
  static ConvexSet linear_inequalities(Matrix A, Vector b);
  static ConvexSet product(std::vector<ConvexSet> factors);

  const Variant& variant() const { return variant_; }
  std::string kind() const;
  Index dim() const { return dim_; }

  Vector project(const Vector& x) const;
  bool contains(const Vector& x, double tol = kDomainTol) const;

  /// Orthogonal projector onto the subspace parallel to aff(X).
  Matrix affine_hull_projector() const;
  Vector apply_affine_hull_projector(const Vector& v) const;

  /// Q(x) v.
  Vector q_apply(const Vector& x, const Vector& v, DomainCheck check = DomainCheck::enforce) const;
  /// Q(x) applied to every column of V.
  Matrix q_apply_columns(const Vector& x, const Matrix& V,
                         DomainCheck check = DomainCheck::enforce) const;
  Matrix q_matrix(const Vector& x, DomainCheck check = DomainCheck::enforce) const;
  /// (DQ(x)[d]) v.
  Vector dq_apply(const Vector& x, const Vector& d, const Vector& v,
                  DomainCheck check = DomainCheck::enforce) const;
  /// Gradient in d of <w, DQ(x)[d] v>.
  Vector dq_adjoint(const Vector& x, const Vector& w, const Vector& v,
                    DomainCheck check = DomainCheck::enforce) const;

  /// Euclidean projection of v onto the normal cone N_X(x). Boundary faces are detected with
  /// the absolute tolerance `active_tol`.
  Vector project_normal_cone(const Vector& x, const Vector& v, double active_tol = 1e-9) const;

  nlohmann::json to_json() const;
  static ConvexSet from_json(const nlohmann::json& j);

 private:
  explicit ConvexSet(Variant v);
  void check_domain(const Vector& x, const char* op) const;

  Variant variant_;
  Index dim_ = 0;
};

namespace detail {

/// min 0.5 mu^T G mu - r^T mu subject to mu >= 0, G symmetric PSD (active-set method).
Vector nonneg_quadratic_min(const Matrix& G, const Vector& r, int max_iter = 0);

/// Symmetric part (M + M^T) / 2.
inline Matrix sym(const Matrix& M) { return 0.5 * (M + M.transpose()); }

}  // namespace detail

}  // namespace dissolve
