#pragma once

namespace fpcm::cli {

// Entry point behind the binary; exposed for in-process testing.
// Exit codes: 0 ok, 2 usage/config, 3 data or format, 4 numeric failure.
int run(int argc, const char* const* argv);

}  // namespace fpcm::cli
