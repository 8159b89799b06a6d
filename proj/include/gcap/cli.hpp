#pragma once

#include <string>
#include <vector>

namespace gcap::cli {

// Exit codes: 0 success, 1 usage, 2 data/format, 3 numeric failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace gcap::cli
