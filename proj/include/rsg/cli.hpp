#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rsg::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;       // invalid dump, I/O or analysis error
inline constexpr int kNoTrials = 2;      // analyze: no trial survived filtering
inline constexpr int kUsage = 64;        // unknown flag, bad value

/// Subcommands: validate, analyze, simulate, sweep. Errors are reported as a
/// single line "rsg: error: <kind>: <message>" on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same as above; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rsg::cli
