#pragma once

#include <iosfwd>

namespace stx {

// Entry point of the `stx` command; returns the process exit code
// (0 ok, 1 usage, 2 data or other error, 3 numeric error).
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stx
