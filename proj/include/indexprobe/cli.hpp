#pragma once

#include <iosfwd>

namespace indexprobe::cli {

// Exit codes: 0 success, 1 computation error, 2 configuration error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace indexprobe::cli
