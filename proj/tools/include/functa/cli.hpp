#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace functa::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

/// Runs one command. `args` excludes the program name: the first entry is the
/// command, e.g. {"flow-sample", "--flow", "f.ckpt", "--out", "dir"}.
/// Progress goes to `err`, help text to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Names of all commands in the order they are listed by `--help`.
std::vector<std::string> command_names();

}  // namespace functa::cli
