#pragma once

namespace san::cli {

// Full command-line front end. Returns the process exit code:
//   0 success, 2 configuration error, 3 data/protocol error, 1 internal.
int run(int argc, const char* const* argv);

}  // namespace san::cli
