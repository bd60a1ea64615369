#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gripcvae::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs the command line `args` (without the program name). Returns the
/// process exit code: 0 success, 1 domain or I/O error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gripcvae::cli
