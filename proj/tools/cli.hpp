#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace mmsift::cli {

/// Runs the mmsift command line on `args` (without the program name).
/// Returns 0 on success, 2 on I/O errors and 1 on every other failure,
/// including unparseable flags.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

int run(int argc, const char* const* argv);

}  // namespace mmsift::cli
