#pragma once

// Command implementations shared by the C API and the CLI. Each command
// consumes a resolved key=value config, writes its artifacts plus the
// resolved config next to them, and returns a one-line summary.

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace exbehrt {

// All commands, in documentation order.
const std::vector<std::string>& command_names();

// Full key set with defaults; required keys default to the empty string.
// Throws a usage error for unknown commands.
std::map<std::string, std::string> command_defaults(const std::string& command);

// Keys that must be set to a non-empty value before running.
const std::vector<std::string>& command_required_keys(const std::string& command);

struct CommandResult {
    std::string summary;
};

// Validates the config against the command's key set (unknown keys are
// usage errors), fills defaults, runs, and writes <out>/<command>.config.
// Timestamped progress lines go to `log` (console, never artifacts).
CommandResult run_command(const std::string& command,
                          const std::map<std::string, std::string>& config, std::ostream& log);

} // namespace exbehrt
