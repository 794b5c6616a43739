#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace disa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitInternal = 1;

/// Incompatible or malformed command-line input.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs one `disa` command. `args` excludes the program name. Returns the process exit code:
/// 0 success, 2 usage, 3 data, 4 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version();

}  // namespace disa::cli
