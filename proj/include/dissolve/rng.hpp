#pragma once

#include <cstdint>
#include <random>

#include "dissolve/types.hpp"

namespace dissolve {

/// Seedable generator. Independent tensors of one instance draw from distinct streams of the
/// same seed so that adding a tensor never shifts the others.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Vector uniform_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform();
    return v;
  }

  /// Filled column by column.
  Matrix normal_matrix(Index rows, Index cols) {
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) M(i, j) = normal();
    }
    return M;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace dissolve
