#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pft {

// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
// failure (divergence, degenerate input, failed gradient check).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pft
