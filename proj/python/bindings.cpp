#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>

#include "dissolve/cli.hpp"
#include "dissolve/diagnostics.hpp"
#include "dissolve/problems.hpp"
#include "dissolve/solvers.hpp"

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace py = pybind11;
using namespace dissolve;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict result_dict(const SolveResult& r) {
  py::dict d;
  d["x"] = r.x_final;
  d["fval"] = r.f_val;
  d["hval"] = r.h_val;
  d["feas"] = r.feas;
  d["stat"] = r.stat;
  d["iters"] = r.iters;
  d["time_s"] = r.wall_time_s;
  d["status"] = to_string(r.status);
  d["beta"] = r.beta_final;
  return d;
}

GeneratedProblem rebuild(const ProblemInstance& inst, double beta) {
  ProblemInstance copy = inst;
  copy.beta = beta;
  PenaltyProblem prob = build_problem(copy);
  return {std::move(copy), std::move(prob)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constraint dissolving penalty solver: sets, benchmark problems, solvers and checks.";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<CapabilityError>(m, "CapabilityError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<ConvexSet>(m, "ConvexSet")
      .def_static("box", &ConvexSet::box, py::arg("lower"), py::arg("upper"))
      .def_static("free_space", &ConvexSet::free_space, py::arg("n"))
      .def_static("nonneg_orthant", &ConvexSet::nonneg_orthant, py::arg("n"))
      .def_static("norm_ball", &ConvexSet::norm_ball, py::arg("n"), py::arg("radius") = 1.0,
                  py::arg("exponent") = 2.0)
      .def_static("simplex", &ConvexSet::simplex, py::arg("n"))
      .def_static("second_order_cone", &ConvexSet::second_order_cone, py::arg("n"))
      .def_static("spectral_ball", &ConvexSet::spectral_ball, py::arg("rows"), py::arg("cols"))
      .def_static("psd_cone", &ConvexSet::psd_cone, py::arg("size"))
      .def_static("psd_spectral_ball", &ConvexSet::psd_spectral_ball, py::arg("size"))
      .def_static("linear_inequalities", &ConvexSet::linear_inequalities, py::arg("A"), py::arg("b"))
      .def_static("product", &ConvexSet::product, py::arg("factors"))
      .def_static("from_json", [](const py::object& obj) { return ConvexSet::from_json(from_python(obj)); })
      .def_property_readonly("dim", &ConvexSet::dim)
      .def_property_readonly("kind", &ConvexSet::kind)
      .def("project", &ConvexSet::project, py::arg("x"))
      .def("contains", &ConvexSet::contains, py::arg("x"), py::arg("tol") = kDomainTol)
      .def("q_matrix", [](const ConvexSet& s, const Vector& x) { return s.q_matrix(x); }, py::arg("x"))
      .def("affine_hull_projector", &ConvexSet::affine_hull_projector)
      .def("project_normal_cone", &ConvexSet::project_normal_cone, py::arg("x"), py::arg("v"),
           py::arg("active_tol") = 1e-9)
      .def("to_json", [](const ConvexSet& s) { return to_python(s.to_json()); });

  py::class_<GeneratedProblem>(m, "Problem")
      .def_property_readonly("family", [](const GeneratedProblem& g) { return to_string(g.instance.family); })
      .def_property_readonly("dim", [](const GeneratedProblem& g) { return g.instance.dim(); })
      .def_property_readonly("beta", [](const GeneratedProblem& g) { return g.instance.beta; })
      .def_property_readonly("x0", [](const GeneratedProblem& g) { return g.instance.x0; })
      .def_property_readonly("set", [](const GeneratedProblem& g) { return g.problem.set; })
      .def("with_beta", [](const GeneratedProblem& g, double beta) { return rebuild(g.instance, beta); },
           py::arg("beta"))
      .def("h", [](const GeneratedProblem& g, const Vector& x) { return h_value(g.problem, x); }, py::arg("x"))
      .def("grad", [](const GeneratedProblem& g, const Vector& x) { return h_grad(g.problem, x); }, py::arg("x"))
      .def("constraints", [](const GeneratedProblem& g, const Vector& x) { return g.problem.cmap.value(x); },
           py::arg("x"))
      .def("dissolve", [](const GeneratedProblem& g, const Vector& x) { return g.problem.amap.value(x); },
           py::arg("x"))
      .def("stationarity", [](const GeneratedProblem& g, const Vector& x) { return stationarity_measure(g.problem, x); },
           py::arg("x"))
      .def("feasibility", [](const GeneratedProblem& g, const Vector& x) { return feasibility_measure(g.problem, x); },
           py::arg("x"))
      .def("kkt_residual", [](const GeneratedProblem& g, const Vector& x) { return kkt_residual_original(g.problem, x); },
           py::arg("x"))
      .def("feasible_points", [](const GeneratedProblem& g, int count, std::uint64_t seed) {
             return feasible_points(g.instance, count, seed);
           }, py::arg("count"), py::arg("seed") = 0)
      .def("to_json", [](const GeneratedProblem& g) { return to_python(instance_to_json(g.instance)); })
      .def_static("from_json", [](const py::object& obj) {
        const ProblemInstance inst = instance_from_json(from_python(obj));
        return rebuild(inst, inst.beta);
      });

  m.def("gen_npca", &gen_npca, py::arg("n"), py::arg("m_cols"), py::arg("rho") = 0.0, py::arg("seed") = 0,
        py::arg("beta") = 100.0, "Nonnegative sparse PCA over the unit sphere.");
  m.def("gen_qpb", [](Index n, double density, std::uint64_t seed, double beta, const std::string& mode) {
          return gen_qpb(n, density, seed, beta, map_mode_from_string(mode));
        }, py::arg("n"), py::arg("density") = 0.5, py::arg("seed") = 0, py::arg("beta") = 10.0,
        py::arg("map_mode") = "generic_analytic", "Nonconvex quadratic over a sphere inside the unit ball.");
  m.def("gen_fpca", [](Index n, Index k, Index d, std::uint64_t seed, double beta, const std::string& mode) {
          return gen_fpca(n, k, d, seed, beta, map_mode_from_string(mode));
        }, py::arg("n"), py::arg("k") = 2, py::arg("d") = 3, py::arg("seed") = 0, py::arg("beta") = 1.0,
        py::arg("map_mode") = "generic_analytic", "Fair PCA in epigraph form.");

  m.def("solve", [](const GeneratedProblem& g, std::optional<Vector> x0, const std::string& solver,
                    double tol_stat, double tol_feas, int max_iter) {
          SolverConfig cfg;
          if (solver == "pgbb") {
            cfg.step_rule = StepRule::bb_nonmonotone;
          } else if (solver == "pg") {
            cfg.step_rule = StepRule::fixed;
          } else {
            throw InvalidInput("unknown solver \"" + solver + "\" (expected pgbb or pg)");
          }
          cfg.tol_stat = tol_stat;
          cfg.tol_feas = tol_feas;
          cfg.max_iter = max_iter;
          SolveResult r;
          {
            py::gil_scoped_release release;
            r = solve(g.problem, x0.value_or(g.instance.x0), cfg);
          }
          return result_dict(r);
        }, py::arg("problem"), py::arg("x0") = py::none(), py::arg("solver") = "pgbb",
        py::arg("tol_stat") = 1e-6, py::arg("tol_feas") = 1e-6, py::arg("max_iter") = 5000,
        "Minimize the penalty function over X; returns a dict of final metrics.");

  m.def("grad_check", [](const GeneratedProblem& g, int count, std::uint64_t seed) {
          return to_python(grad_check(g.problem, neighborhood_points(g.instance, count, seed)).to_json());
        }, py::arg("problem"), py::arg("count") = 20, py::arg("seed") = 0);
  m.def("assumption_a_check", [](const GeneratedProblem& g, int count, std::uint64_t seed) {
          const auto& p = g.problem;
          return to_python(
              assumption_a_check(p.amap, p.cmap, p.set, feasible_points(g.instance, count, seed), seed).to_json());
        }, py::arg("problem"), py::arg("count") = 20, py::arg("seed") = 0);
  m.def("q_mapping_check", [](const ConvexSet& s, int samples, std::uint64_t seed) {
          return to_python(q_mapping_check(s, samples, seed).to_json());
        }, py::arg("set"), py::arg("samples") = 100, py::arg("seed") = 0);

  m.def("run_cli", [](const std::vector<std::string>& args) {
          std::vector<std::string> argv{"dissolve"};
          argv.insert(argv.end(), args.begin(), args.end());
          std::ostringstream out, err;
          const int code = run_cli(argv, out, err);
          return py::make_tuple(code, out.str(), err.str());
        }, py::arg("args"), "Runs the command line tool; returns (exit_code, stdout, stderr).");
  m.def("set_warnings_enabled", &set_warnings_enabled, py::arg("enabled"));

#ifdef VERSION_INFO
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
