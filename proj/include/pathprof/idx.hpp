#pragma once

#include <string>

#include "pathprof/dataset.hpp"

namespace pathprof {

// Parses the IDX pair (big-endian magic 0x00000803 for images with dims
// n x rows x cols, 0x00000801 for labels with dim n). Pixel bytes scale to
// [0, 1]. num_classes = 0 infers max(label) + 1.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int num_classes = 0, const std::string& split = "");

// Writes the same pair; pixels quantize as round(v * 255).
void save_idx(const LabeledDataset& data, const std::string& images_path,
              const std::string& labels_path);

}  // namespace pathprof
