#pragma once

// Command-line front end. Each subcommand is a thin wrapper over the library.

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace rwkvir::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kEmptyInput = 2,
  kInfeasible = 3,
  kNumeric = 4,
};

/// Maps a library exception to the documented exit code.
int exit_code_for(const std::exception& e);

/// Runs `rwkvir <subcommand> ...`. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Sets a dotted key ("train.seed") in a JSON object text to a value parsed as
/// JSON when possible and as a string otherwise. Returns the new text.
std::string apply_override(const std::string& json_text, const std::string& assignment);

}  // namespace rwkvir::cli
