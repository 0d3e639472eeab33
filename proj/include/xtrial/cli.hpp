#pragma once

#include <string>
#include <vector>

namespace xtrial {

// Exit codes: 0 success, 2 missing/bad input file or records, 3 validation
// failure (report printed), 4 estimation failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace xtrial
