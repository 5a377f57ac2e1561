#include "dissolve/problems.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "dissolve/rng.hpp"

namespace dissolve {

namespace {

// Stream offsets: one per random tensor of an instance.
constexpr std::uint64_t kStreamData = 1;
constexpr std::uint64_t kStreamLinear = 2;
constexpr std::uint64_t kStreamStart = 3;
constexpr std::uint64_t kStreamRetry = 1000;
constexpr std::uint64_t kMaxGraphAttempts = 1000;
constexpr std::uint64_t kStreamSamples = 0x5eed;

using ConstMap = Eigen::Map<const Matrix>;

Objective npca_objective(const NpcaData& data) {
  Objective f;
  f.n = data.B.rows();
  f.value = [B = data.B, rho = data.rho](const Vector& x) {
    return -0.5 * (B.transpose() * x).squaredNorm() + rho * x.sum();
  };
  f.grad = [B = data.B, rho = data.rho](const Vector& x) {
    return (-(B * (B.transpose() * x)) + Vector::Constant(x.size(), rho)).eval();
  };
  return f;
}

Objective qpb_objective(const QpbData& data) {
  Objective f;
  f.n = data.Q.rows();
  f.value = [Q = data.Q, q = data.q](const Vector& x) { return 0.5 * x.dot(Q * x) + q.dot(x); };
  f.grad = [Q = data.Q, q = data.q](const Vector& x) { return (Q * x + q).eval(); };
  return f;
}

struct FpcaLayout {
  Index n;
  Index d;
  Index k;
  Index np() const { return n * d; }
  Index dim() const { return n * d + k + 1; }
};

ConstraintMap fpca_constraint(std::shared_ptr<const FpcaData> data, FpcaLayout lay) {
  const auto grams = std::make_shared<std::vector<Matrix>>();
  for (const auto& A : data->groups) grams->push_back(A.transpose() * A);
  const double m = static_cast<double>(lay.n);
  ConstraintMap c;
  c.n = lay.dim();
  c.p = lay.k + 1;
  c.value = [data, grams, lay, m](const Vector& x) {
    const ConstMap P(x.data(), lay.n, lay.d);
    Vector out(lay.k + 1);
    for (Index i = 0; i < lay.k; ++i) {
      const double inner = (P.transpose() * (*grams)[static_cast<std::size_t>(i)] * P).trace();
      out[i] = (-inner + data->top_energy[i]) / m + x[lay.np() + i] - x[lay.dim() - 1];
    }
    out[lay.k] = P.squaredNorm() - static_cast<double>(lay.d);
    return out;
  };
  c.jac_apply = [grams, lay, m](const Vector& x, const Vector& dx) {
    const ConstMap P(x.data(), lay.n, lay.d);
    const ConstMap dP(dx.data(), lay.n, lay.d);
    Vector out(lay.k + 1);
    for (Index i = 0; i < lay.k; ++i) {
      const double inner = (P.transpose() * (*grams)[static_cast<std::size_t>(i)] * dP).trace();
      out[i] = -2.0 * inner / m + dx[lay.np() + i] - dx[lay.dim() - 1];
    }
    out[lay.k] = 2.0 * P.cwiseProduct(dP).sum();
    return out;
  };
  c.jac_t_apply = [grams, lay, m](const Vector& x, const Vector& v) {
    const ConstMap P(x.data(), lay.n, lay.d);
    Matrix gP = 2.0 * v[lay.k] * P;
    for (Index i = 0; i < lay.k; ++i) gP -= (2.0 * v[i] / m) * ((*grams)[static_cast<std::size_t>(i)] * P);
    Vector out(lay.dim());
    out.head(lay.np()) = Eigen::Map<const Vector>(gP.data(), gP.size());
    out.segment(lay.np(), lay.k) = v.head(lay.k);
    out[lay.dim() - 1] = -v.head(lay.k).sum();
    return out;
  };
  c.hess_apply = [grams, lay, m](const Vector&, const Vector& lam, const Vector& dx) {
    const ConstMap dP(dx.data(), lay.n, lay.d);
    Matrix hP = 2.0 * lam[lay.k] * dP;
    for (Index i = 0; i < lay.k; ++i) hP -= (2.0 * lam[i] / m) * ((*grams)[static_cast<std::size_t>(i)] * dP);
    Vector out = Vector::Zero(lay.dim());
    out.head(lay.np()) = Eigen::Map<const Vector>(hP.data(), hP.size());
    return out;
  };
  return c;
}

ConvexSet fpca_set(const FpcaLayout& lay) {
  return ConvexSet::product({ConvexSet::spectral_ball(lay.n, lay.d), ConvexSet::nonneg_orthant(lay.k),
                             ConvexSet::free_space(1)});
}

FpcaLayout fpca_layout(const ProblemInstance& inst) {
  const auto& data = std::get<FpcaData>(inst.data);
  return {inst.n, data.rank, static_cast<Index>(data.groups.size())};
}

Vector unit_random(Rng& rng, Index n) {
  Vector g = rng.normal_vector(n);
  double norm = g.norm();
  while (norm == 0.0) {
    g = rng.normal_vector(n);
    norm = g.norm();
  }
  return g / norm;
}

double top_energy(const Matrix& A, Index d) {
  const Vector s = Eigen::JacobiSVD<Matrix>(A).singularValues();
  return s.head(std::min<Index>(d, s.size())).squaredNorm();
}

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::npca: return "npca";
    case Family::qpb: return "qpb";
    case Family::fpca: return "fpca";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "npca") return Family::npca;
  if (name == "qpb") return Family::qpb;
  if (name == "fpca") return Family::fpca;
  throw InvalidInput("unknown family \"" + name + "\"");
}

Index ProblemInstance::dim() const {
  if (family == Family::fpca) return fpca_layout(*this).dim();
  return n;
}

std::string ProblemInstance::extra_dims() const {
  switch (family) {
    case Family::npca: return "cols=" + std::to_string(std::get<NpcaData>(data).B.cols());
    case Family::qpb: {
      std::ostringstream os;
      os << "density=" << std::get<QpbData>(data).edge_density;
      return os.str();
    }
    case Family::fpca: {
      const auto lay = fpca_layout(*this);
      return "k=" + std::to_string(lay.k) + ";d=" + std::to_string(lay.d);
    }
  }
  return "";
}

Vector fpca_group_losses(const FpcaData& data, Index n, const Matrix& P) {
  const auto k = static_cast<Index>(data.groups.size());
  Vector out(k);
  for (Index i = 0; i < k; ++i) {
    const Matrix AP = data.groups[static_cast<std::size_t>(i)] * P;
    out[i] = (-AP.squaredNorm() + data.top_energy[i]) / static_cast<double>(n);
  }
  return out;
}

double fpca_objective(const FpcaData& data, Index n, const Matrix& P) {
  return fpca_group_losses(data, n, P).maxCoeff();
}

PenaltyProblem build_problem(const ProblemInstance& inst, std::optional<double> beta) {
  const double b = beta.value_or(inst.beta);
  switch (inst.family) {
    case Family::npca: {
      const auto& data = std::get<NpcaData>(inst.data);
      const Index n = data.B.rows();
      ClosedFormParams params;
      params.n = n;
      PenaltyProblem prob{npca_objective(data), sphere_constraint(Matrix::Identity(n, n)),
                          closed_form_map("sphere_nonneg", params), ConvexSet::nonneg_orthant(n), b};
      prob.validate();
      return prob;
    }
    case Family::qpb: {
      const auto& data = std::get<QpbData>(inst.data);
      const Index n = data.Q.rows();
      ConvexSet ball = ConvexSet::norm_ball(n, 1.0);
      ConstraintMap c = shifted_sphere_constraint(data.d, 1.0);
      DissolvingMap a = build_aq(ball, c, 1.0, inst.map_mode);
      PenaltyProblem prob{qpb_objective(data), std::move(c), std::move(a), std::move(ball), b};
      prob.validate();
      return prob;
    }
    case Family::fpca: {
      const auto lay = fpca_layout(inst);
      auto data = std::make_shared<const FpcaData>(std::get<FpcaData>(inst.data));
      Objective f;
      f.n = lay.dim();
      f.value = [last = lay.dim() - 1](const Vector& x) { return x[last]; };
      f.grad = [dim = lay.dim()](const Vector&) { return Vector::Unit(dim, dim - 1).eval(); };
      ConvexSet set = fpca_set(lay);
      ConstraintMap c = fpca_constraint(data, lay);
      DissolvingMap a = build_aq(set, c, 1.0, inst.map_mode);
      PenaltyProblem prob{std::move(f), std::move(c), std::move(a), std::move(set), b};
      prob.validate();
      return prob;
    }
  }
  throw InvalidInput("build_problem: unknown family");
}

GeneratedProblem gen_npca(Index n, Index m_cols, double rho, std::uint64_t seed, double beta) {
  if (n < 1 || m_cols < 1) throw InvalidInput("gen_npca: n and m_cols must be positive");
  if (!(rho >= 0)) throw InvalidInput("gen_npca: rho must be nonnegative");
  Rng data_rng(seed, kStreamData);
  Matrix B = data_rng.normal_matrix(n, m_cols);
  B *= static_cast<double>(m_cols) / Eigen::JacobiSVD<Matrix>(B).singularValues()[0];
  Rng start_rng(seed, kStreamStart);
  ProblemInstance inst;
  inst.family = Family::npca;
  inst.n = n;
  inst.seed = seed;
  inst.data = NpcaData{std::move(B), rho};
  inst.x0 = unit_random(start_rng, n).cwiseAbs();
  inst.beta = beta;
  inst.map_mode = MapMode::closed_form;
  PenaltyProblem prob = build_problem(inst);
  return {std::move(inst), std::move(prob)};
}

GeneratedProblem gen_qpb(Index n, double edge_density, std::uint64_t seed, double beta, MapMode mode) {
  if (n < 2) throw InvalidInput("gen_qpb: n must be at least 2");
  if (!(edge_density > 0 && edge_density <= 1)) throw InvalidInput("gen_qpb: edge_density must lie in (0, 1]");
  Matrix L = Matrix::Zero(n, n);
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng graph_rng(seed, kStreamData + attempt * kStreamRetry);
    L.setZero();
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (graph_rng.bernoulli(edge_density)) {
          L(i, j) = L(j, i) = -1.0;
          L(i, i) += 1.0;
          L(j, j) += 1.0;
        }
      }
    }
    if (L.squaredNorm() > 0.0) break;
    if (attempt + 1 >= kMaxGraphAttempts) {
      throw InvalidInput("gen_qpb: no edges after " + std::to_string(kMaxGraphAttempts) +
                         " attempts; edge_density is too small for n");
    }
    log_warning("gen_qpb: generated graph has no edges, regenerating (attempt " +
                std::to_string(attempt + 1) + ")");
  }
  Rng linear_rng(seed, kStreamLinear);
  Vector q = linear_rng.uniform_vector(n);
  while (q.norm() == 0.0) q = linear_rng.uniform_vector(n);
  Rng start_rng(seed, kStreamStart);
  ProblemInstance inst;
  inst.family = Family::qpb;
  inst.n = n;
  inst.seed = seed;
  Vector d = Vector::Zero(n);
  d[0] = 0.5;
  inst.data = QpbData{-L / L.norm(), q / q.norm(), std::move(d), edge_density};
  inst.x0 = unit_random(start_rng, n);
  inst.beta = beta;
  inst.map_mode = mode;
  PenaltyProblem prob = build_problem(inst);
  return {std::move(inst), std::move(prob)};
}

GeneratedProblem gen_fpca(Index n, Index k, Index d, std::uint64_t seed, double beta, MapMode mode) {
  if (d < 1 || d > n) throw InvalidInput("gen_fpca: need 1 <= d <= n");
  if (k < 1) throw InvalidInput("gen_fpca: k must be positive");
  Rng data_rng(seed, kStreamData);
  FpcaData data;
  data.rank = d;
  data.top_energy.resize(k);
  for (Index i = 0; i < k; ++i) {
    data.groups.push_back(data_rng.normal_matrix(n, n));
    data.top_energy[i] = top_energy(data.groups.back(), d);
  }
  Rng start_rng(seed, kStreamStart);
  const Matrix R = start_rng.normal_matrix(n, d);
  Matrix P = std::sqrt(static_cast<double>(d)) * R / R.norm();
  const double smax = Eigen::JacobiSVD<Matrix>(P).singularValues()[0];
  if (smax > 1.0) {
    log_warning("gen_fpca: initial P has spectral norm " + std::to_string(smax) +
                " > 1, rescaled into the spectral ball");
    P /= smax;
  }
  const FpcaLayout lay{n, d, k};
  const Vector losses = fpca_group_losses(data, n, P);
  const double z0 = losses.maxCoeff() + 1.0;
  Vector x0(lay.dim());
  x0.head(lay.np()) = Eigen::Map<const Vector>(P.data(), P.size());
  x0.segment(lay.np(), k) = (z0 - losses.array()).matrix();
  x0[lay.dim() - 1] = z0;

  ProblemInstance inst;
  inst.family = Family::fpca;
  inst.n = n;
  inst.seed = seed;
  inst.data = std::move(data);
  inst.x0 = std::move(x0);
  inst.beta = beta;
  inst.map_mode = mode;
  PenaltyProblem prob = build_problem(inst);
  return {std::move(inst), std::move(prob)};
}

std::vector<Vector> feasible_points(const ProblemInstance& inst, int count, std::uint64_t seed) {
  Rng rng(seed, kStreamSamples);
  std::vector<Vector> pts;
  pts.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int s = 0; s < count; ++s) {
    switch (inst.family) {
      case Family::npca:
        pts.push_back(unit_random(rng, inst.n).cwiseAbs());
        break;
      case Family::qpb: {
        // x = d + u with ||u|| = 1; ||x|| <= 1 is equivalent to u_1 <= -1/4.
        const Index n = inst.n;
        const double u1 = -1.0 + 0.75 * rng.uniform();
        Vector u(n);
        u[0] = u1;
        if (n > 1) u.tail(n - 1) = unit_random(rng, n - 1) * std::sqrt(std::max(0.0, 1.0 - u1 * u1));
        pts.push_back(std::get<QpbData>(inst.data).d + u);
        break;
      }
      case Family::fpca: {
        const auto lay = fpca_layout(inst);
        const auto& data = std::get<FpcaData>(inst.data);
        Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(lay.n, lay.d));
        const Matrix P = qr.householderQ() * Matrix::Identity(lay.n, lay.d);
        const Vector losses = fpca_group_losses(data, lay.n, P);
        const double z = losses.maxCoeff() + 0.5 + rng.uniform();
        Vector x(lay.dim());
        x.head(lay.np()) = Eigen::Map<const Vector>(P.data(), P.size());
        x.segment(lay.np(), lay.k) = (z - losses.array()).matrix();
        x[lay.dim() - 1] = z;
        pts.push_back(std::move(x));
        break;
      }
    }
  }
  return pts;
}

std::vector<Vector> neighborhood_points(const ProblemInstance& inst, int count, std::uint64_t seed,
                                        double radius, double margin) {
  const std::vector<Vector> base = feasible_points(inst, count, seed);
  const PenaltyProblem prob = build_problem(inst);
  Rng rng(seed, kStreamSamples + 1);
  std::vector<Vector> pts;
  for (const Vector& x : base) {
    Vector y = prob.set.project(x + radius * unit_random(rng, x.size()));
    switch (inst.family) {
      case Family::npca:
        y = y.cwiseMax(margin);
        break;
      case Family::qpb:
        y *= 1.0 - margin;
        break;
      case Family::fpca: {
        const auto lay = fpca_layout(inst);
        y.head(lay.np()) *= 1.0 - margin;
        y.segment(lay.np(), lay.k).array() += margin;
        break;
      }
    }
    pts.push_back(std::move(y));
  }
  return pts;
}

double reference_small_oracle(const ProblemInstance& inst) {
  const PenaltyProblem prob = build_problem(inst);
  if (inst.family == Family::npca && inst.n <= 3) {
    constexpr int kGrid = 1000;
    const double step = (std::numbers::pi / 2.0) / (kGrid - 1);
    if (inst.n == 1) return prob.f.value(Vector::Ones(1));
    double best = std::numeric_limits<double>::infinity();
    Vector x(inst.n);
    for (int a = 0; a < kGrid; ++a) {
      const double th = a * step;
      if (inst.n == 2) {
        x << std::cos(th), std::sin(th);
        best = std::min(best, prob.f.value(x));
        continue;
      }
      for (int b = 0; b < kGrid; ++b) {
        const double ph = b * step;
        x << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th);
        best = std::min(best, prob.f.value(x));
      }
    }
    return best;
  }
  if (inst.family == Family::qpb && inst.n == 2) {
    constexpr int kGrid = 100000;
    const Vector& d = std::get<QpbData>(inst.data).d;
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double t) {
      const Vector x = d + Vector{{std::cos(t), std::sin(t)}};
      if (x.norm() <= 1.0 + 1e-12) best = std::min(best, prob.f.value(x));
    };
    for (int s = 0; s < kGrid; ++s) consider(2.0 * std::numbers::pi * s / kGrid);
    // The arc ends where the circle meets the unit sphere; include them exactly.
    const double t_end = std::acos(-0.25);
    consider(t_end);
    consider(-t_end);
    return best;
  }
  throw CapabilityError("reference_small_oracle: supported for NPCA with n <= 3 and QPB with n = 2");
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

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != cols) throw InvalidInput("matrix json: ragged rows");
    for (Index c = 0; c < cols; ++c) M(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

nlohmann::json instance_to_json(const ProblemInstance& inst) {
  nlohmann::json j;
  j["family"] = to_string(inst.family);
  j["n"] = inst.n;
  j["seed"] = inst.seed;
  j["beta"] = inst.beta;
  j["map_mode"] = to_string(inst.map_mode);
  j["x0"] = vector_to_json(inst.x0);
  std::visit(
      [&](const auto& data) {
        using T = std::decay_t<decltype(data)>;
        if constexpr (std::is_same_v<T, NpcaData>) {
          j["B"] = matrix_to_json(data.B);
          j["rho"] = data.rho;
        } else if constexpr (std::is_same_v<T, QpbData>) {
          j["Q"] = matrix_to_json(data.Q);
          j["q"] = vector_to_json(data.q);
          j["d"] = vector_to_json(data.d);
          j["edge_density"] = data.edge_density;
        } else {
          j["rank"] = data.rank;
          j["top_energy"] = vector_to_json(data.top_energy);
          j["groups"] = nlohmann::json::array();
          for (const auto& A : data.groups) j["groups"].push_back(matrix_to_json(A));
        }
      },
      inst.data);
  return j;
}

ProblemInstance instance_from_json(const nlohmann::json& j) {
  try {
    ProblemInstance inst;
    inst.family = family_from_string(j.at("family").get<std::string>());
    inst.n = j.at("n").get<Index>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.beta = j.at("beta").get<double>();
    inst.map_mode = map_mode_from_string(j.at("map_mode").get<std::string>());
    inst.x0 = vector_from_json(j.at("x0"));
    switch (inst.family) {
      case Family::npca:
        inst.data = NpcaData{matrix_from_json(j.at("B")), j.at("rho").get<double>()};
        break;
      case Family::qpb:
        inst.data = QpbData{matrix_from_json(j.at("Q")), vector_from_json(j.at("q")),
                            vector_from_json(j.at("d")), j.at("edge_density").get<double>()};
        break;
      case Family::fpca: {
        FpcaData data;
        data.rank = j.at("rank").get<Index>();
        data.top_energy = vector_from_json(j.at("top_energy"));
        for (const auto& g : j.at("groups")) data.groups.push_back(matrix_from_json(g));
        inst.data = std::move(data);
        break;
      }
    }
    if (inst.x0.size() != inst.dim()) throw InvalidInput("instance json: x0 has the wrong length");
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("instance json: ") + e.what());
  }
}

}  // namespace dissolve
