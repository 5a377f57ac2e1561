#pragma once

#include "dissolve/types.hpp"

namespace dissolve::linalg {

/// Moore-Penrose pseudo-inverse via SVD; singular values below rel_cutoff * sigma_max are
/// treated as zero.
Matrix pinv(const Matrix& M, double rel_cutoff = 1e-12);

/// Number of singular values above rel_cutoff * sigma_max.
Index numerical_rank(const Matrix& M, double rel_cutoff = 1e-10);

/// Singular values in decreasing order.
Vector singular_values(const Matrix& M);

}  // namespace dissolve::linalg
