#pragma once

namespace sits::cli {

/// Parses argv, runs one subcommand and returns the process exit code:
/// 0 success, 1 usage or configuration error, 2 data or format error.
int run(int argc, char** argv);

} // namespace sits::cli
