#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tpap {

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation, I/O, data or training errors
inline constexpr int kExitUsage = 2;    // unknown subcommand or flag

/// Entry point of the `tpap` tool. args[0] is the program name.
/// Subcommands: train, evaluate, purify, ablate, report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tpap
