#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dissolve/cli.hpp"
#include "dissolve/problems.hpp"

using namespace dissolve;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), {"dissolve", "--quiet"});
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& row) {
  std::vector<std::string> out;
  std::istringstream is(row);
  for (std::string f; std::getline(is, f, ',');) out.push_back(f);
  if (!row.empty() && row.back() == ',') out.emplace_back();
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("dissolve_cli_" + std::string(info->name()) + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    set_warnings_enabled(false);
  }
  void TearDown() override {
    fs::remove_all(dir_);
    set_warnings_enabled(true);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// Columns: family,n,extra_dims,rho,seed,solver,beta,fval,feas,stat,iters,time_s,status
constexpr int kFval = 7, kFeas = 8, kStat = 9, kTime = 11, kStatus = 12;

}  // namespace

TEST_F(CliTest, SolveNpcaReachesTolerance) {
  const auto r = cli({"solve", "--family", "npca", "--n", "100", "--cols", "50", "--rho", "0.0", "--seed", "0",
                      "--beta", "100"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = lines(r.out);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], kCsvHeader);
  const auto row = fields(out[1]);
  ASSERT_EQ(row.size(), 13u);
  EXPECT_EQ(row[0], "npca");
  EXPECT_EQ(row[2], "cols=50");
  EXPECT_LE(std::stod(row[kFeas]), 1e-6);
  EXPECT_LE(std::stod(row[kStat]), 1e-6);
  EXPECT_EQ(row[kStatus], "converged");
}

TEST_F(CliTest, SolveQpbMatchesOracle) {
  const auto r = cli({"solve", "--family", "qpb", "--n", "2", "--seed", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto row = fields(lines(r.out)[1]);
  const double oracle = reference_small_oracle(gen_qpb(2, 0.5, 0).instance);
  EXPECT_NEAR(std::stod(row[kFval]), oracle, 1e-4);
  EXPECT_EQ(row[3], "");
}

TEST_F(CliTest, InvalidConfigWritesNothing) {
  const auto csv = path("out.csv"), json = path("out.json");
  EXPECT_EQ(cli({"solve", "--family", "tsp", "--csv", csv, "--json", json}).code, 2);
  EXPECT_EQ(cli({"solve", "--family", "npca", "--max-iter", "-1", "--csv", csv}).code, 2);
  EXPECT_EQ(cli({"solve", "--family", "qpb", "--n", "1", "--csv", csv}).code, 2);
  EXPECT_EQ(cli({"solve", "--family", "npca", "--bogus"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_FALSE(fs::exists(csv));
  EXPECT_FALSE(fs::exists(json));
}

TEST_F(CliTest, CsvAppendsIdenticalRows) {
  const auto csv = path("runs.csv");
  const std::vector<std::string> args = {"solve", "--family", "npca", "--n", "30", "--seed", "2", "--csv", csv};
  ASSERT_EQ(cli(args).code, 0);
  ASSERT_EQ(cli(args).code, 0);
  const auto rows = lines(read_file(csv));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], kCsvHeader);
  auto a = fields(rows[1]), b = fields(rows[2]);
  a[kTime] = b[kTime] = "";
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, JsonRecordRoundTripsThroughLoader) {
  const auto json = path("record.json");
  const auto first = cli({"solve", "--family", "qpb", "--n", "12", "--seed", "3", "--json", json});
  ASSERT_EQ(first.code, 0) << first.err;
  const auto record = nlohmann::json::parse(read_file(json));
  EXPECT_EQ(record.at("status"), "converged");
  EXPECT_TRUE(record.contains("x_final"));
  const auto again = cli({"solve", "--instance", json});
  ASSERT_EQ(again.code, 0) << again.err;
  auto a = fields(lines(first.out)[1]), b = fields(lines(again.out)[1]);
  a[kTime] = b[kTime] = "";
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, DumpInstanceReplays) {
  const auto inst = path("inst.json");
  ASSERT_EQ(cli({"dump-instance", "--family", "npca", "--n", "15", "--seed", "4", "--out", inst}).code, 0);
  const auto j = nlohmann::json::parse(read_file(inst));
  const auto g = gen_npca(15, 7, 0.0, 4);
  EXPECT_EQ(j, instance_to_json(g.instance));
  const auto a = cli({"solve", "--instance", inst});
  const auto b = cli({"solve", "--family", "npca", "--n", "15", "--seed", "4"});
  EXPECT_EQ(fields(lines(a.out)[1])[kFval], fields(lines(b.out)[1])[kFval]);
}

TEST_F(CliTest, SeedFromEnvironment) {
  ::setenv("DISSOLVE_SEED", "17", 1);
  const auto r = cli({"dump-instance", "--family", "qpb", "--n", "4"});
  ::unsetenv("DISSOLVE_SEED");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out).at("seed"), 17);
  ::setenv("DISSOLVE_SEED", "seventeen", 1);
  EXPECT_EQ(cli({"dump-instance", "--family", "qpb"}).code, 2);
  ::unsetenv("DISSOLVE_SEED");
}

TEST_F(CliTest, NumericalFailureExitsThree) {
  auto j = instance_to_json(gen_qpb(3, 1.0, 0).instance);
  j["beta"] = 1e308;
  const auto inst = path("huge.json"), record = path("huge_record.json");
  std::ofstream(inst) << j.dump();
  const auto r = cli({"solve", "--instance", inst, "--json", record});
  EXPECT_EQ(r.code, 3) << r.out << r.err;
  EXPECT_EQ(nlohmann::json::parse(read_file(record)).at("status"), "numerical_failure");
}

TEST_F(CliTest, BenchEmptySuiteIsHeaderOnly) {
  const auto suite = path("empty.json");
  std::ofstream(suite) << "[]";
  const auto r = cli({"bench", "--suite", suite});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, std::string(kCsvHeader) + "\n");
}

TEST_F(CliTest, BenchSuiteExpandsInOrder) {
  const auto suite = path("suite.json");
  std::ofstream(suite) << R"([{"family": "npca", "n": [20, 30], "rho": [0, 0.1], "seeds": [0, 1]},
                            {"family": "qpb", "n": 10, "seeds": [5]}])";
  const auto csv = path("bench.csv");
  const auto r = cli({"bench", "--suite", suite, "--jobs", "3", "--csv", csv});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(fields(rows[1])[1], "20");
  EXPECT_EQ(fields(rows[1])[4], "0");
  EXPECT_EQ(fields(rows[2])[4], "1");
  EXPECT_EQ(fields(rows[3])[3], "0.1");
  EXPECT_EQ(fields(rows[9])[0], "qpb");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(fields(rows[i])[kStatus], "converged");
  EXPECT_EQ(lines(read_file(csv)).size(), 10u);
  // Parallel and serial runs agree except for timings.
  const auto serial = cli({"bench", "--suite", suite, "--jobs", "1"});
  const auto srows = lines(serial.out);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto a = fields(rows[i]), b = fields(srows[i]);
    a[kTime] = b[kTime] = "";
    EXPECT_EQ(a, b);
  }
}

TEST_F(CliTest, BenchFpcaPicksBetaFromGrid) {
  const auto r = cli({"bench", "--family", "fpca", "--n", "10", "--k", "2", "--d", "2", "--seeds", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto row = fields(lines(r.out)[1]);
  EXPECT_EQ(row[2], "k=2;d=2");
  EXPECT_TRUE(row[6] == "0.1" || row[6] == "1" || row[6] == "10") << row[6];
}

TEST_F(CliTest, CheckPassesForNpcaAndQpb) {
  for (const char* family : {"npca", "qpb"}) {
    const auto r = cli({"check", "--family", family, "--n", "20"});
    EXPECT_EQ(r.code, 0) << family << "\n" << r.out;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  }
}

TEST_F(CliTest, CheckReportsFpcaKernelDefect) {
  // The Frobenius constraint gradient 2P lies in the null space of Q(P) on K, so the kernel
  // property of the generic mapping fails for this family.
  const auto r = cli({"check", "--family", "fpca", "--n", "8", "--k", "2", "--d", "3", "--json"});
  EXPECT_EQ(r.code, 1);
  const auto reports = nlohmann::json::parse(r.out);
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& rep : reports) {
    EXPECT_EQ(rep.at("passed").get<bool>(), rep.at("check_name") != "assumption_a_check") << rep.at("check_name");
  }
  for (const auto& d : reports[1].at("details")) {
    EXPECT_LE(d.at("fixed_point").get<double>(), 1e-10);
    EXPECT_LE(d.at("idempotency").get<double>(), 1e-6);
  }
}

TEST_F(CliTest, InjectedFaultNamesFailingCheck) {
  const auto r = cli({"check", "--family", "npca", "--n", "20", "--inject-fault", "shift"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("failed: assumption_a_check"), std::string::npos) << r.out;
  EXPECT_EQ(cli({"check", "--family", "npca", "--inject-fault", "other"}).code, 2);
}

TEST_F(CliTest, CheckJsonIsReportArray) {
  const auto r = cli({"check", "--family", "qpb", "--n", "10", "--points", "5", "--json"});
  ASSERT_EQ(r.code, 0);
  const auto reports = nlohmann::json::parse(r.out);
  ASSERT_TRUE(reports.is_array());
  std::vector<std::string> names;
  for (const auto& rep : reports) names.push_back(rep.at("check_name"));
  EXPECT_EQ(names, (std::vector<std::string>{"grad_check", "assumption_a_check", "pi_sigma",
                                             "local_error_bound_probe"}));
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("solve"), std::string::npos);
}
