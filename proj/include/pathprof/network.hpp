#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pathprof/sha256.hpp"

namespace pathprof {

using Shape = std::vector<int>;  // {dim} for flat data, {channels, height, width} for images

std::int64_t flat_size(const Shape& s);
std::string shape_to_string(const Shape& s);

// Weights are stored row-major per output: weights(j, i) connects input i to
// output j. Flat weight coordinate = j * in_dim + i.
struct DenseLayer {
    int in_dim = 0;
    int out_dim = 0;
    Eigen::MatrixXf weights;  // out_dim x in_dim
    Eigen::VectorXf bias;     // out_dim
};

// weights(oc, k) with k = (ic * kernel_h + ky) * kernel_w + kx; flat weight
// coordinate = oc * (in_channels * kernel_h * kernel_w) + k.
struct Conv2DLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;
    Eigen::MatrixXf weights;  // out_channels x (in_channels * kernel_h * kernel_w)
    Eigen::VectorXf bias;     // out_channels
};

struct MaxPool2DLayer {
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
};

struct AvgPool2DLayer {
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
};

struct ReLULayer {};

struct FlattenLayer {};

// Adds the output of layers[source_layer_index] to this layer's input.
struct ResidualAddLayer {
    int source_layer_index = -1;
};

using LayerSpec = std::variant<DenseLayer, Conv2DLayer, MaxPool2DLayer, AvgPool2DLayer,
                               ReLULayer, FlattenLayer, ResidualAddLayer>;

const char* layer_kind_name(const LayerSpec& layer);

struct Network {
    Shape input_shape;
    std::vector<LayerSpec> layers;

    // Throws DomainError on shape incompatibilities, bad residual sources, or
    // non-finite weights.
    void validate() const;

    // Output shape of every layer, in order. Throws on incompatible shapes.
    std::vector<Shape> layer_output_shapes() const;

    Shape output_shape() const;
    int num_classes() const;

    // SHA-256 of the topology (layer kinds, dimensions, strides, residual
    // wiring, input shape). Weight values are not part of the fingerprint.
    Digest256 fingerprint() const;
};

// Output spatial extent of a convolution/pooling sweep.
int conv_output_extent(int input, int kernel, int stride, int padding);

// Seeded factories. He-style uniform fan-in initialization, biases zero.
Network make_mlp(const std::vector<int>& dims, std::uint64_t seed);
// 2 conv (+ ReLU + max-pool) stages followed by 2 dense layers.
Network make_lenet(int in_channels, int height, int width, int num_classes, std::uint64_t seed);

}  // namespace pathprof
