#pragma once

#include <ostream>

namespace shiftlens::cli {

// Exit codes: 0 success, 1 runtime error, 2 usage error, 3 shift detected
// (detect subcommand only).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shiftlens::cli
