#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace myoattn::cli {

// Exit codes: 0 success, 1 usage error, 2 data/contract error.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace myoattn::cli
