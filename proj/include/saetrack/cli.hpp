#pragma once

// Command-line front end: parse_args builds a validated Command from argv, execute runs it.
//
// Exit codes: 0 success, 1 usage or argument error, 2 I/O or format error, 3 numeric or
// training failure, 4 configuration error.

#include "saetrack/common.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace saetrack::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutEnv = "SAETRACK_OUT";

struct Command {
  std::string name;
  nlohmann::json options = nlohmann::json::object();  // every flag of `name`, defaults filled
  std::vector<std::string> argv;
  bool help = false;
  std::string usage;
};

/// `args` excludes the program name. Throws ArgumentError on unknown subcommands or flags,
/// missing required flags, malformed values and conflicting flags.
Command parse_args(const std::vector<std::string>& args);

/// Runs a parsed command. Errors are reported on `err` and mapped to exit codes.
int execute(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse_args + execute.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code(ErrorKind kind);

}  // namespace saetrack::cli
