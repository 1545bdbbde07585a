#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mcm::cli {

inline constexpr const char* kVersion = "1.0.0";

/// Process exit codes.
enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2, kDataError = 3, kNumeric = 4 };

/// Runs one subcommand; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mcm::cli
