#pragma once

/**
 * @file cli.hpp
 * @brief Command-line front end: `fpca <verb> [options]`.
 *
 * Exit codes: 0 success, 2 fit did not converge (result still written),
 * 64 usage error, 65 malformed input data, 66 missing input file.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpca::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNotConverged = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitDataFormat = 65;
inline constexpr int kExitNoInput = 66;
inline constexpr int kExitSoftware = 70;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by parse when --help was requested; what() is the help text.
class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Command {
  std::string verb;
  std::map<std::string, std::string> options;  // option name without dashes -> raw value
  int threads = 0;
  bool quiet = false;
  std::optional<std::uint64_t> seed;
};

const std::vector<std::string>& verbs();

/// Validates the verb and option names. Throws UsageError or HelpRequested.
Command parse(const std::vector<std::string>& args);

/// Executes a parsed command; progress goes to `out`, diagnostics to `err`.
int run(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse + run with exit-code mapping.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fpca::cli
