#pragma once

#include <cstdint>
#include <string>

#include "pathprof/dataset.hpp"

namespace pathprof {

// Renders a balanced 10-class set of 28x28 digit images: stroke skeletons
// under random affine jitter, stroke-width and intensity variation, plus
// additive noise, quantized to 8-bit and scaled back to [0, 1] so the set
// round-trips exactly through the IDX format. Deterministic under seed.
LabeledDataset make_synthetic_digits(int count, std::uint64_t seed, const std::string& split);

}  // namespace pathprof
