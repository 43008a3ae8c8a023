#pragma once

namespace xnorforge {

/// Command-line entry point.  Exit codes: 0 success, 1 validation or domain
/// error, 2 I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace xnorforge
