#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dissolve {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitInvalidConfig = 2, kExitNumerical = 3 };

/// Runs the dissolve command line; argv[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Column order of result tables.
inline constexpr const char* kCsvHeader =
    "family,n,extra_dims,rho,seed,solver,beta,fval,feas,stat,iters,time_s,status";

}  // namespace dissolve
