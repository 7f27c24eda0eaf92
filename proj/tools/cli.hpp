#pragma once

#include <iosfwd>

namespace hprune::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kFileError = 2,
  kPartial = 3,
  kVerifyFailed = 4,
};

// Entry point of the `hprune` tool; subcommands gen, prune, eval, verify.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hprune::cli
