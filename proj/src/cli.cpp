#include "dissolve/cli.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dissolve/diagnostics.hpp"
#include "dissolve/problems.hpp"
#include "dissolve/solvers.hpp"

namespace dissolve {

namespace {

struct InstanceArgs {
  std::string family = "npca";
  Index n = 0;
  Index cols = 0;
  double density = 0.5;
  Index k = 2;
  Index d = 3;
  double rho = 0.0;
  std::uint64_t seed = 0;
  std::string map_mode = "generic_analytic";
};

struct RunPlan {
  InstanceArgs inst;
  std::vector<double> betas;  // empty: family default (FPCA: the grid)
  std::string solver = "pgbb";
  int max_iter = 5000;
  double tol_stat = 0.0;  // 0: family default
  double tol_feas = 0.0;
  double eta = 0.0;
};

struct RunOutcome {
  ProblemInstance instance;
  SolveResult result;
  double beta = 0.0;
  std::string solver;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("DISSOLVE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw InvalidInput(std::string("DISSOLVE_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

// Shortest representation that round-trips.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Index default_n(Family f) {
  switch (f) {
    case Family::npca: return 100;
    case Family::qpb: return 100;
    case Family::fpca: return 20;
  }
  return 10;
}

GeneratedProblem generate(const InstanceArgs& s, double beta) {
  const Family family = family_from_string(s.family);
  const Index n = s.n > 0 ? s.n : default_n(family);
  const MapMode mode = map_mode_from_string(s.map_mode);
  switch (family) {
    case Family::npca:
      return gen_npca(n, s.cols > 0 ? s.cols : std::max<Index>(1, n / 2), s.rho, s.seed, beta);
    case Family::qpb: return gen_qpb(n, s.density, s.seed, beta, mode);
    case Family::fpca: return gen_fpca(n, s.k, s.d, s.seed, beta, mode);
  }
  throw InvalidInput("unknown family");
}

double family_default_beta(Family f) {
  switch (f) {
    case Family::npca: return 100.0;
    case Family::qpb: return 10.0;
    case Family::fpca: return 1.0;
  }
  return 1.0;
}

SolverConfig solver_config(const RunPlan& plan, Family family) {
  SolverConfig cfg;
  const double tol = family == Family::fpca ? 1e-4 : 1e-6;
  cfg.tol_stat = plan.tol_stat > 0 ? plan.tol_stat : tol;
  cfg.tol_feas = plan.tol_feas > 0 ? plan.tol_feas : tol;
  cfg.max_iter = plan.max_iter;
  cfg.eta = plan.eta;
  if (plan.solver == "pgbb") {
    cfg.step_rule = StepRule::bb_nonmonotone;
  } else if (plan.solver == "pg") {
    cfg.step_rule = StepRule::fixed;
  } else {
    throw InvalidInput("unknown solver \"" + plan.solver + "\" (expected pgbb or pg)");
  }
  cfg.validate();
  return cfg;
}

// Converged first, then feasible, then lowest objective.
bool better(const SolveResult& a, const SolveResult& b, const SolverConfig& cfg) {
  auto rank = [&](const SolveResult& r) {
    if (r.status == SolveStatus::converged) return 0;
    if (r.feas <= cfg.tol_feas) return 1;
    return 2;
  };
  if (rank(a) != rank(b)) return rank(a) < rank(b);
  if (rank(a) == 2) return a.feas < b.feas;
  return a.f_val < b.f_val;
}

RunOutcome run_instance(const ProblemInstance& loaded, const RunPlan& plan) {
  const SolverConfig cfg = solver_config(plan, loaded.family);
  std::vector<double> betas = plan.betas;
  if (betas.empty()) {
    betas = loaded.family == Family::fpca ? std::vector<double>{0.1, 1.0, 10.0}
                                          : std::vector<double>{loaded.beta};
  }
  std::optional<RunOutcome> best;
  for (double beta : betas) {
    if (!(beta >= 0)) throw InvalidInput("beta must be nonnegative");
    ProblemInstance inst = loaded;
    inst.beta = beta;
    const PenaltyProblem prob = build_problem(inst);
    SolveResult r = solve(prob, inst.x0, cfg);
    if (!best || better(r, best->result, cfg)) best = RunOutcome{std::move(inst), std::move(r), beta, plan.solver};
  }
  return *best;
}

RunOutcome run_generated(const RunPlan& plan) {
  const Family family = family_from_string(plan.inst.family);
  const double beta0 = plan.betas.empty() ? family_default_beta(family) : plan.betas.front();
  return run_instance(generate(plan.inst, beta0).instance, plan);
}

std::string csv_row(const RunOutcome& o) {
  const ProblemInstance& inst = o.instance;
  std::ostringstream os;
  os << to_string(inst.family) << ',' << inst.n << ',' << inst.extra_dims() << ',';
  if (inst.family == Family::npca) os << fmt(std::get<NpcaData>(inst.data).rho);
  os << ',' << inst.seed << ',' << o.solver << ',' << fmt(o.beta) << ',' << fmt(o.result.f_val) << ','
     << fmt(o.result.feas) << ',' << fmt(o.result.stat) << ',' << o.result.iters << ','
     << fmt(o.result.wall_time_s) << ',' << to_string(o.result.status);
  return os.str();
}

nlohmann::json result_record(const RunOutcome& o) {
  nlohmann::json j;
  j["instance"] = instance_to_json(o.instance);
  j["solver"] = o.solver;
  j["beta"] = o.beta;
  j["fval"] = o.result.f_val;
  j["hval"] = o.result.h_val;
  j["feas"] = o.result.feas;
  j["stat"] = o.result.stat;
  j["iters"] = o.result.iters;
  j["time_s"] = o.result.wall_time_s;
  j["status"] = to_string(o.result.status);
  j["x_final"] = vector_to_json(o.result.x_final);
  return j;
}

void append_csv(const std::string& path, const std::vector<std::string>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open " + path);
  if (fresh) f << kCsvHeader << '\n';
  for (const auto& r : rows) f << r << '\n';
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot read " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

void add_instance_options(CLI::App* cmd, InstanceArgs& s) {
  cmd->add_option("--family", s.family, "npca, qpb or fpca")->check(CLI::IsMember({"npca", "qpb", "fpca"}));
  cmd->add_option("--n", s.n, "Problem dimension (default 100 for npca/qpb, 20 for fpca)");
  cmd->add_option("--cols", s.cols, "NPCA data columns (default n/2)");
  cmd->add_option("--density", s.density, "QPB edge density");
  cmd->add_option("--k", s.k, "FPCA groups");
  cmd->add_option("--d", s.d, "FPCA target rank");
  cmd->add_option("--rho", s.rho, "NPCA sparsity weight");
  cmd->add_option("--seed", s.seed, "Instance seed (default $DISSOLVE_SEED or 0)");
  cmd->add_option("--map-mode", s.map_mode, "generic_analytic or generic_fd (qpb, fpca)");
}

void add_solver_options(CLI::App* cmd, RunPlan& r) {
  cmd->add_option("--solver", r.solver, "pgbb or pg")->check(CLI::IsMember({"pgbb", "pg"}));
  cmd->add_option("--max-iter", r.max_iter, "Iteration limit");
  cmd->add_option("--tol-stat", r.tol_stat, "Stationarity tolerance (default 1e-6, fpca 1e-4)");
  cmd->add_option("--tol-feas", r.tol_feas, "Feasibility tolerance (default 1e-6, fpca 1e-4)");
  cmd->add_option("--eta", r.eta, "Fixed step for --solver pg (default 1/L estimate)");
}

// ---------------------------------------------------------------- bench suites

std::vector<double> numbers(const nlohmann::json& v) {
  if (v.is_array()) return v.get<std::vector<double>>();
  return {v.get<double>()};
}

std::vector<RunPlan> expand_suite(const nlohmann::json& suite, const RunPlan& base) {
  std::vector<RunPlan> runs;
  const nlohmann::json entries = suite.is_array() ? suite : suite.value("runs", nlohmann::json::array());
  for (const auto& e : entries) {
    RunPlan proto = base;
    proto.inst.family = e.at("family").get<std::string>();
    family_from_string(proto.inst.family);
    if (e.contains("solver")) proto.solver = e["solver"].get<std::string>();
    if (e.contains("max_iter")) proto.max_iter = e["max_iter"].get<int>();
    if (e.contains("tol")) proto.tol_stat = proto.tol_feas = e["tol"].get<double>();
    if (e.contains("density")) proto.inst.density = e["density"].get<double>();
    if (e.contains("k")) proto.inst.k = e["k"].get<Index>();
    if (e.contains("d")) proto.inst.d = e["d"].get<Index>();
    if (e.contains("cols")) proto.inst.cols = e["cols"].get<Index>();
    if (e.contains("map_mode")) proto.inst.map_mode = e["map_mode"].get<std::string>();
    if (e.contains("beta")) proto.betas = numbers(e["beta"]);
    const std::vector<double> ns = e.contains("n") ? numbers(e["n"]) : std::vector<double>{0};
    const std::vector<double> rhos = e.contains("rho") ? numbers(e["rho"]) : std::vector<double>{0.0};
    std::vector<double> seeds = {static_cast<double>(base.inst.seed)};
    if (e.contains("seeds")) seeds = numbers(e["seeds"]);
    for (double n : ns) {
      for (double rho : rhos) {
        for (double seed : seeds) {
          RunPlan r = proto;
          r.inst.n = static_cast<Index>(n);
          r.inst.rho = rho;
          r.inst.seed = static_cast<std::uint64_t>(seed);
          runs.push_back(r);
        }
      }
    }
  }
  return runs;
}

// ---------------------------------------------------------------- commands

int cmd_solve(const RunPlan& plan, const std::string& instance_path, const std::string& csv_path,
              const std::string& json_path, std::ostream& out) {
  RunOutcome o;
  if (!instance_path.empty()) {
    nlohmann::json j = read_json_file(instance_path);
    if (j.contains("instance")) j = j["instance"];
    o = run_instance(instance_from_json(j), plan);
  } else {
    o = run_generated(plan);
  }
  const std::string row = csv_row(o);
  if (!csv_path.empty()) append_csv(csv_path, {row});
  if (!json_path.empty()) {
    std::ofstream f(json_path);
    f << result_record(o).dump(2) << '\n';
  }
  out << kCsvHeader << '\n' << row << '\n';
  return o.result.status == SolveStatus::numerical_failure ? kExitNumerical : kExitOk;
}

int cmd_bench(const std::vector<RunPlan>& runs, unsigned jobs, const std::string& csv_path,
              std::ostream& out, std::ostream& err) {
  std::vector<std::string> rows(runs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      try {
        rows[i] = csv_row(run_generated(runs[i]));
      } catch (const std::exception& e) {
        const auto& s = runs[i].inst;
        std::ostringstream os;
        os << s.family << ',' << s.n << ",," << fmt(s.rho) << ',' << s.seed << ',' << runs[i].solver
           << ",,,,,,,error";
        rows[i] = os.str();
        std::lock_guard<std::mutex> lock(err_mutex);
        err << "bench: run " << i << " failed: " << e.what() << '\n';
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(runs.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (!csv_path.empty()) {
    append_csv(csv_path, rows);
  }
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << r << '\n';
  return kExitOk;
}

int cmd_check(const InstanceArgs& plan, int points, bool json, const std::string& fault,
              std::ostream& out) {
  const Family family = family_from_string(plan.family);
  const GeneratedProblem g = generate(plan, family_default_beta(family));
  PenaltyProblem prob = g.problem;
  if (fault == "shift") {
    const Index n = prob.dim();
    DissolvingMap a = identity_map(n);
    a.mode = MapMode::closed_form;
    a.value = [n](const Vector& x) { return (x + 1e-3 * Vector::Ones(n)).eval(); };
    a.value_unchecked = a.value;
    prob.amap = a;
  } else if (!fault.empty()) {
    throw InvalidInput("unknown fault \"" + fault + "\" (expected shift)");
  }
  const auto feasible = feasible_points(g.instance, points, plan.seed);
  std::vector<CheckReport> reports;
  reports.push_back(grad_check(prob, neighborhood_points(g.instance, points, plan.seed)));
  reports.push_back(assumption_a_check(prob.amap, prob.cmap, prob.set, feasible, plan.seed));

  CheckReport pi;
  pi.check_name = "pi_sigma";
  pi.threshold = 1.0;
  for (const Vector& x : feasible) {
    const Index r = constraint_rank(prob.cmap, prob.set, x);
    const double value = r > 0 ? pi_sigma(prob.cmap, prob.set, x, r) : 0.0;
    const double violation = value > 0 ? 1e-8 / value : std::numeric_limits<double>::infinity();
    pi.details.push_back({{"pi", value}, {"rank", r}});
    pi.worst_violation = std::max(pi.worst_violation, violation);
    ++pi.samples;
  }
  pi.passed = pi.worst_violation <= pi.threshold;
  reports.push_back(pi);
  if (!feasible.empty()) {
    reports.push_back(local_error_bound_probe(prob.cmap, prob.set, feasible.front(), 50, plan.seed));
  }

  bool ok = true;
  for (const auto& r : reports) ok = ok && r.passed;
  if (json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(r.to_json());
    out << arr.dump(2) << '\n';
  } else {
    out << std::left << std::setw(26) << "check" << std::setw(9) << "samples" << std::setw(15)
        << "worst" << std::setw(11) << "threshold" << "result\n";
    for (const auto& r : reports) {
      out << std::left << std::setw(26) << r.check_name << std::setw(9) << r.samples << std::setw(15)
          << std::setprecision(6) << r.worst_violation << std::setw(11) << r.threshold
          << (r.passed ? "PASS" : "FAIL") << '\n';
      for (const auto& note : r.notices) out << "  note: " << note << '\n';
    }
    for (const auto& r : reports) {
      if (!r.passed) out << "failed: " << r.check_name << '\n';
    }
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_dump(const InstanceArgs& plan, const std::string& path, std::ostream& out) {
  const Family family = family_from_string(plan.family);
  const GeneratedProblem g = generate(plan, family_default_beta(family));
  const std::string text = instance_to_json(g.instance).dump(2);
  if (path.empty()) {
    out << text << '\n';
  } else {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << text << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, out, err);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constraint dissolving penalty solver and diagnostics", "dissolve"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress warnings");

  RunPlan plan;
  std::vector<double> betas;
  std::string instance_path;
  std::string csv_path;
  std::string json_path;
  auto* solve_cmd = app.add_subcommand("solve", "Generate or load an instance and solve it");
  add_instance_options(solve_cmd, plan.inst);
  add_solver_options(solve_cmd, plan);
  solve_cmd->add_option("--beta", betas, "Penalty parameter(s); several values pick the best run");
  solve_cmd->add_option("--instance", instance_path, "Instance or result JSON to load");
  solve_cmd->add_option("--csv", csv_path, "Append the result row to this CSV file");
  solve_cmd->add_option("--json", json_path, "Write the result record to this JSON file");

  std::string suite_path;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<double> bench_n;
  std::vector<double> bench_rho;
  std::vector<double> bench_seeds;
  auto* bench_cmd = app.add_subcommand("bench", "Run a matrix of instances and print a CSV table");
  bench_cmd->add_option("--suite", suite_path, "Suite JSON: list of {family, n, rho, seeds, ...}");
  bench_cmd->add_option("--family", plan.inst.family, "Family for a flag-defined suite");
  bench_cmd->add_option("--n", bench_n, "Dimensions");
  bench_cmd->add_option("--rho", bench_rho, "NPCA rho values");
  bench_cmd->add_option("--seeds", bench_seeds, "Seeds");
  bench_cmd->add_option("--cols", plan.inst.cols, "NPCA data columns");
  bench_cmd->add_option("--k", plan.inst.k, "FPCA groups");
  bench_cmd->add_option("--d", plan.inst.d, "FPCA target rank");
  bench_cmd->add_option("--beta", betas, "Penalty parameter(s)");
  bench_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--csv", csv_path, "Append rows to this CSV file");
  add_solver_options(bench_cmd, plan);

  InstanceArgs check_args;
  int points = 20;
  bool check_json = false;
  std::string fault;
  auto* check_cmd = app.add_subcommand("check", "Run the diagnostic checks for a family");
  add_instance_options(check_cmd, check_args);
  check_cmd->add_option("--points", points, "Sample points per check")->check(CLI::PositiveNumber);
  check_cmd->add_flag("--json", check_json, "Print the reports as JSON");
  check_cmd->add_option("--inject-fault", fault, "Test hook: replace A by a faulty map (shift)");

  InstanceArgs dump_args;
  std::string dump_path;
  auto* dump_cmd = app.add_subcommand("dump-instance", "Write a generated instance as JSON");
  add_instance_options(dump_cmd, dump_args);
  dump_cmd->add_option("--out", dump_path, "Output path (default stdout)");

  try {
    const std::uint64_t seed = default_seed();
    plan.inst.seed = check_args.seed = dump_args.seed = seed;
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalidConfig;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidConfig;
  }
  set_warnings_enabled(!quiet);

  try {
    if (solve_cmd->parsed()) {
      plan.betas = betas;
      return cmd_solve(plan, instance_path, csv_path, json_path, out);
    }
    if (bench_cmd->parsed()) {
      std::vector<RunPlan> runs;
      RunPlan base = plan;
      base.betas = betas;
      if (!suite_path.empty()) {
        runs = expand_suite(read_json_file(suite_path), base);
      } else if (!bench_n.empty() || !bench_seeds.empty()) {
        nlohmann::json e = {{"family", plan.inst.family}};
        if (!bench_n.empty()) e["n"] = bench_n;
        if (!bench_rho.empty()) e["rho"] = bench_rho;
        if (!bench_seeds.empty()) e["seeds"] = bench_seeds;
        runs = expand_suite(nlohmann::json::array({e}), base);
      }
      for (const auto& r : runs) {
        family_from_string(r.inst.family);
        solver_config(r, family_from_string(r.inst.family));
      }
      return cmd_bench(runs, jobs, csv_path, out, err);
    }
    if (check_cmd->parsed()) return cmd_check(check_args, points, check_json, fault, out);
    if (dump_cmd->parsed()) return cmd_dump(dump_args, dump_path, out);
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitInvalidConfig;
}

}  // namespace dissolve
