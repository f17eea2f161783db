#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pathprof/network.hpp"

namespace pathprof {

// Images are flat float32 vectors (channel-major), pixel values in [0, 1].
struct LabeledDataset {
    std::vector<Eigen::VectorXf> images;
    std::vector<int> labels;
    Shape image_shape;
    int num_classes = 0;
    std::string split;

    std::size_t size() const { return images.size(); }

    // Throws DomainError on count mismatch, out-of-range labels, or pixels
    // outside [0, 1].
    void validate() const;

    LabeledDataset head(std::size_t n) const;
};

}  // namespace pathprof
