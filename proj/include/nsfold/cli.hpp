#pragma once

#include <ostream>

namespace nsfold {

/// Exit codes of the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // bad flags or config, failed check, aborted trial
inline constexpr int kExitIo = 2;          // unreadable or malformed files

/// Subcommands: train, gradcheck, minima-verify, fm-export, eval.
/// Reports go to `out`, diagnostics and usage text to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nsfold
