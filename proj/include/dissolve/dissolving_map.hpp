#pragma once

#include <functional>
#include <optional>
#include <string>

#include "dissolve/constraint.hpp"
#include "dissolve/sets.hpp"
#include "dissolve/types.hpp"

namespace dissolve {

enum class MapMode { identity, closed_form, generic_analytic, generic_fd };

std::string to_string(MapMode mode);
MapMode map_mode_from_string(const std::string& name);

/// A constraint dissolving mapping A : R^n -> R^n together with its transposed Jacobian
/// product vjp(x, w) = grad A(x) w, where grad A(x) has the gradients of the components of A
/// as columns.
struct DissolvingMap {
  using ValueFn = std::function<Vector(const Vector&)>;
  using ProductFn = std::function<Vector(const Vector&, const Vector&)>;

  Index n = 0;
  MapMode mode = MapMode::identity;
  double sigma = 0.0;
  ValueFn value;
  ProductFn vjp;
  /// Same as value but without the x in X precondition; finite differences step outside X.
  ValueFn value_unchecked;
  /// Exact product when the ingredients are available, empty otherwise.
  ProductFn analytic_vjp;

  /// Materialized Jacobian of A in the usual orientation (row i is the gradient of A_i).
  Matrix jacobian(const Vector& x) const;
};

DissolvingMap identity_map(Index n);

/// The generic mapping
///   A_Q(x) = x - Q(x) J (J^T Q(x) J + sigma ||c(x)||^2 I)^+ c(x),   J = grad c(x).
/// Without an explicit mode the analytic product is used when cmap has second-order
/// products, finite differences otherwise.
DissolvingMap build_aq(const ConvexSet& set, const ConstraintMap& cmap, double sigma = 1.0,
                       std::optional<MapMode> mode = std::nullopt);

/// Exact grad A_Q(x) w; throws CapabilityError when the map was built without
/// second-order constraint products.
Vector aq_vjp_analytic(const DissolvingMap& amap, const Vector& x, const Vector& w);

/// Central-difference grad A(x) w, using 2n evaluations of A.
Vector aq_vjp_fd(const DissolvingMap& amap, const Vector& x, const Vector& w);

struct ClosedFormParams {
  Index n = 0;          // sphere_nonneg (when H is empty), lq_nonneg
  Matrix H;             // sphere_nonneg
  double exponent = 2;  // lq_nonneg
  Index rows = 0;       // psd_diag (size), nonneg_orthonormal_diag
  Index cols = 0;       // nonneg_orthonormal_diag
};

/// Closed-form mappings:
///   sphere_nonneg            A(x) = x - x (x^T H x - 1) / 2
///   lq_nonneg                A(x) = x / (1 + (||x||_q^q - 1) / q)
///   psd_diag                 A(X) = sym(X (2I - Diag(X)))
///   nonneg_orthonormal_diag  A(X) = X - X Diag(X^T X - I) / 2
DissolvingMap closed_form_map(const std::string& kind, const ClosedFormParams& params);

}  // namespace dissolve
