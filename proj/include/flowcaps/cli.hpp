#pragma once

#include <string>
#include <vector>

namespace fc {

// Full command-line entry point (argv[0] is the program name). Returns the
// process exit code: 0 success, 1 runtime failure, 2 usage error.
int cli_main(int argc, const char* const* argv);

// Convenience wrapper for tests: args without the program name.
int cli_run(const std::vector<std::string>& args);

// Gradient checks over every differentiable primitive (< 1e-4 relative) and
// the full flowcaps-mini + combined-loss composition (< 1e-3), in f64.
// Returns the number of failed checks; prints one line per check if verbose.
int run_gradcheck(bool verbose);

}  // namespace fc
