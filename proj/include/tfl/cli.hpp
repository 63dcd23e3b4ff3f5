#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace tfl {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailed = 1,       // certification or search did not succeed
  kExitConfig = 2,       // unreadable or invalid configuration, bad usage
  kExitEscape = 3,       // arc truncated or left the outer box (outputs still written)
  kExitRuntime = 4,      // numerical or capability error
};

struct CliOptions {
  std::string command;  // simulate | certify | search | sweep | compare
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

/// Runs one subcommand; diagnostics go to `log`. Never throws.
int run_command(const CliOptions& options, std::ostream& log);

/// Parses argv and dispatches to run_command.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tfl
