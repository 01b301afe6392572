#pragma once

#include <string>
#include <vector>

namespace mixscale {

// Exit codes: 0 success, 1 failed checks, 2 usage/config error, 3 I/O or
// dataset error, 4 checkpoint integrity / fingerprint refusal.
int run_cli(const std::vector<std::string>& args);

}  // namespace mixscale
