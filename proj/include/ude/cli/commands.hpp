#pragma once

#include <exception>
#include <iosfwd>

namespace ude::cli {

// Entry point behind the `ude` binary. Returns the process exit code:
// 0 ok, 2 config, 3 missing/stale dependency, 4 data/format, 5 numerical.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code_for(const std::exception& e);

}  // namespace ude::cli
