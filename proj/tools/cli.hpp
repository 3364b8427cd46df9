#pragma once

#include <iosfwd>

namespace tlm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

/// Runs the `tlm` command line. Normal output goes to `out`; failures print a
/// single "ERR: ..." line to `err` and return the matching exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tlm::cli
