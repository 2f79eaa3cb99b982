#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace somnus::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // unexpected error, or a replay whose outputs differ
  kUsage = 2,    // unknown flag or malformed command line
  kInvalid = 3,  // input or configuration failed validation
  kNumerical = 4,
};

/// Runs one `somnus` invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

inline constexpr const char* kVersion = "1.0.0";

}  // namespace somnus::cli
