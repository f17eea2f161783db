#pragma once

#include <string>
#include <vector>

namespace pathprof {

// Entry point behind the pathprof binary. args excludes the program name.
// Exit codes: 0 success, 1 domain/format/io error, 2 usage error.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace pathprof
