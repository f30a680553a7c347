#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace msff::cli {

/// Runs one command; args exclude the program name. Returns the exit status:
/// 0 success, 2 configuration error, 3 numerical failure, 4 non-convergence.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msff::cli
