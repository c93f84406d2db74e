#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace modsteer {

// Whole command line including the program name. Returns the exit code:
// 0 ok, 1 runtime failure (error JSON on `err`), 2 usage error.
int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

} // namespace modsteer
