#pragma once

#include <string>

#include "pathprof/network.hpp"

namespace pathprof {

// Model directory layout: <dir>/model.json manifest plus one raw little-endian
// float32 blob per weight/bias tensor, referenced by filename and byte length.
// Round-trips are bit-exact.
void save_model(const std::string& dir, const Network& net);
Network load_model(const std::string& dir);

}  // namespace pathprof
