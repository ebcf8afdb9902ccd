#pragma once

// Command-line front end. `run_pipeline` parses the arguments, runs one
// subcommand and returns the process exit code:
//   0 success, 1 validation failure or bad usage, 2 I/O failure.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace uncal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// `args` excludes the program name. Reports go to `out` unless `--report`
/// names a file; diagnostics go to `err`.
int run_pipeline(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Seed from UNCAL_SEED when set and valid, otherwise `configured`.
/// InvalidArgument when the variable is set but not an unsigned integer.
std::uint64_t resolve_seed(std::uint64_t configured);

/// Parses "0,8,16,-1"; -1 stands for the last available layer.
std::vector<int> parse_layer_list(const std::string& text, const std::vector<int>& available);

}  // namespace uncal::cli
