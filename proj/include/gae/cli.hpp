#pragma once

namespace gae {

/// Full command-line surface of the `gae` binary (gen / train / eval /
/// reconstruct). Returns the process exit code: 0 success, 1 runtime
/// failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv);

}  // namespace gae
