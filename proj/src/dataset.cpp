#include "pathprof/dataset.hpp"

#include "pathprof/errors.hpp"

namespace pathprof {

void LabeledDataset::validate() const {
    if (images.size() != labels.size()) {
        throw DomainError("dataset has " + std::to_string(images.size()) + " images but " +
                          std::to_string(labels.size()) + " labels");
    }
    if (num_classes <= 0) {
        throw DomainError("dataset num_classes must be positive");
    }
    const std::int64_t expected = flat_size(image_shape);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].size() != expected) {
            throw DomainError("image " + std::to_string(i) + " has " +
                              std::to_string(images[i].size()) + " pixels, expected " +
                              std::to_string(expected));
        }
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw DomainError("label " + std::to_string(labels[i]) + " at index " +
                              std::to_string(i) + " out of range");
        }
        const float lo = images[i].minCoeff();
        const float hi = images[i].maxCoeff();
        if (!(lo >= 0.0f && hi <= 1.0f)) {
            throw DomainError("image " + std::to_string(i) + " has pixels outside [0, 1]");
        }
    }
}

LabeledDataset LabeledDataset::head(std::size_t n) const {
    LabeledDataset out;
    out.image_shape = image_shape;
    out.num_classes = num_classes;
    out.split = split;
    const std::size_t take = std::min(n, images.size());
    out.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(take));
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(take));
    return out;
}

}  // namespace pathprof
