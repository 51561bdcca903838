#pragma once

#include <ostream>

namespace mmgl::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericFailure = 3,
};

/// Entry point of the `mmgl` tool. Failures print one JSON line
/// {"error": kind, "exit_code": n, "message": text} to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mmgl::cli
