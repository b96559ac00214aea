#pragma once

namespace segsr::cli {

// Exit codes: 0 success, 1 quality-gate warning, 2 usage error, 3 data error.
int run(int argc, const char* const* argv);

}  // namespace segsr::cli
