#pragma once

namespace shapeopt {

/// Command-line entry point (subcommands: run, check, mesh). Returns the
/// process exit code: 0 success, 1 domain error, 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace shapeopt
