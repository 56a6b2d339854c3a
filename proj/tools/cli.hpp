#pragma once

namespace psse::cli {

/// Runs one `psse` subcommand. Returns 0 on success, 2 on flag errors and 1
/// on runtime errors; errors are reported as JSON on stderr.
int run_command(int argc, char** argv);

}  // namespace psse::cli
