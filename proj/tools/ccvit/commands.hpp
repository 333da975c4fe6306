#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ccvit::cli {

// Parses and dispatches one command line. Returns the process exit code:
// 0 on success, 1 on a runtime error, 2 on a usage error. Diagnostics go to
// `err`, normal output to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace ccvit::cli
