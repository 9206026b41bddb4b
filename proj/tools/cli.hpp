#pragma once

// Command-line front end. run() is the whole program minus process
// plumbing, so tests drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace xkit::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kData = 3,
  kNumeric = 4,
};

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Inclusive grid lo, lo + step, ... up to hi within half a step.
/// Throws ArgumentError for step <= 0, hi < lo or a malformed spec.
std::vector<double> parse_levels(const std::string& spec);

}  // namespace xkit::cli
