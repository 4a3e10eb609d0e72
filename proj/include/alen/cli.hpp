#pragma once

namespace alen {

/// Entry point for the `alen` tool. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace alen
