#include "pathprof/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "pathprof/errors.hpp"

namespace pathprof {

std::int64_t flat_size(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        n *= d;
    }
    return s.empty() ? 0 : n;
}

std::string shape_to_string(const Shape& s) {
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << (i ? "x" : "") << s[i];
    }
    out << ")";
    return out.str();
}

const char* layer_kind_name(const LayerSpec& layer) {
    struct Visitor {
        const char* operator()(const DenseLayer&) const { return "dense"; }
        const char* operator()(const Conv2DLayer&) const { return "conv2d"; }
        const char* operator()(const MaxPool2DLayer&) const { return "maxpool2d"; }
        const char* operator()(const AvgPool2DLayer&) const { return "avgpool2d"; }
        const char* operator()(const ReLULayer&) const { return "relu"; }
        const char* operator()(const FlattenLayer&) const { return "flatten"; }
        const char* operator()(const ResidualAddLayer&) const { return "residual_add"; }
    };
    return std::visit(Visitor{}, layer);
}

int conv_output_extent(int input, int kernel, int stride, int padding) {
    const int span = input + 2 * padding - kernel;
    if (span < 0 || stride <= 0) {
        return 0;
    }
    return span / stride + 1;
}

namespace {

Shape layer_output_shape(const LayerSpec& layer, const Shape& in, int index,
                         const std::vector<Shape>& earlier) {
    auto fail = [&](const std::string& why) -> Shape {
        throw DomainError("layer " + std::to_string(index) + " (" + layer_kind_name(layer) +
                          "): " + why + "; input shape " + shape_to_string(in));
    };
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        if (in.size() != 1 || in[0] != d->in_dim) {
            return fail("expects flat input of dim " + std::to_string(d->in_dim));
        }
        return {d->out_dim};
    }
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
        if (in.size() != 3 || in[0] != c->in_channels) {
            return fail("expects (channels,h,w) input with " + std::to_string(c->in_channels) +
                        " channels");
        }
        const int oh = conv_output_extent(in[1], c->kernel_h, c->stride, c->padding);
        const int ow = conv_output_extent(in[2], c->kernel_w, c->stride, c->padding);
        if (oh <= 0 || ow <= 0) {
            return fail("kernel does not fit input");
        }
        return {c->out_channels, oh, ow};
    }
    if (const auto* p = std::get_if<MaxPool2DLayer>(&layer)) {
        if (in.size() != 3) {
            return fail("expects (channels,h,w) input");
        }
        const int oh = conv_output_extent(in[1], p->kernel_h, p->stride, 0);
        const int ow = conv_output_extent(in[2], p->kernel_w, p->stride, 0);
        if (oh <= 0 || ow <= 0) {
            return fail("window does not fit input");
        }
        return {in[0], oh, ow};
    }
    if (const auto* p = std::get_if<AvgPool2DLayer>(&layer)) {
        if (in.size() != 3) {
            return fail("expects (channels,h,w) input");
        }
        const int oh = conv_output_extent(in[1], p->kernel_h, p->stride, 0);
        const int ow = conv_output_extent(in[2], p->kernel_w, p->stride, 0);
        if (oh <= 0 || ow <= 0) {
            return fail("window does not fit input");
        }
        return {in[0], oh, ow};
    }
    if (std::holds_alternative<ReLULayer>(layer)) {
        return in;
    }
    if (std::holds_alternative<FlattenLayer>(layer)) {
        return {static_cast<int>(flat_size(in))};
    }
    if (const auto* r = std::get_if<ResidualAddLayer>(&layer)) {
        if (r->source_layer_index < 0 || r->source_layer_index >= index) {
            return fail("source_layer_index must name an earlier layer");
        }
        if (earlier[static_cast<std::size_t>(r->source_layer_index)] != in) {
            return fail("source layer output shape " +
                        shape_to_string(earlier[static_cast<std::size_t>(r->source_layer_index)]) +
                        " does not match input");
        }
        return in;
    }
    return fail("unknown layer kind");
}

bool all_finite(const Eigen::MatrixXf& m) { return m.allFinite(); }
bool all_finite(const Eigen::VectorXf& v) { return v.allFinite(); }

}  // namespace

std::vector<Shape> Network::layer_output_shapes() const {
    std::vector<Shape> shapes;
    shapes.reserve(layers.size());
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        cur = layer_output_shape(layers[i], cur, static_cast<int>(i), shapes);
        shapes.push_back(cur);
    }
    return shapes;
}

Shape Network::output_shape() const {
    if (layers.empty()) {
        return input_shape;
    }
    return layer_output_shapes().back();
}

int Network::num_classes() const { return static_cast<int>(flat_size(output_shape())); }

void Network::validate() const {
    if (input_shape.empty() || flat_size(input_shape) <= 0) {
        throw DomainError("network input shape must be nonempty with positive dims");
    }
    if (layers.empty()) {
        throw DomainError("network must have at least one layer");
    }
    layer_output_shapes();  // throws on incompatibility
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto check = [&](bool ok, const char* what) {
            if (!ok) {
                throw DomainError("layer " + std::to_string(i) + ": " + what);
            }
        };
        if (const auto* d = std::get_if<DenseLayer>(&layers[i])) {
            check(d->weights.rows() == d->out_dim && d->weights.cols() == d->in_dim,
                  "dense weight matrix shape mismatch");
            check(d->bias.size() == d->out_dim, "dense bias length mismatch");
            check(all_finite(d->weights) && all_finite(d->bias), "non-finite dense parameters");
        } else if (const auto* c = std::get_if<Conv2DLayer>(&layers[i])) {
            const int k = c->in_channels * c->kernel_h * c->kernel_w;
            check(c->weights.rows() == c->out_channels && c->weights.cols() == k,
                  "conv weight matrix shape mismatch");
            check(c->bias.size() == c->out_channels, "conv bias length mismatch");
            check(c->stride > 0 && c->padding >= 0, "conv stride/padding out of range");
            check(all_finite(c->weights) && all_finite(c->bias), "non-finite conv parameters");
        }
    }
}

Digest256 Network::fingerprint() const {
    std::ostringstream out;
    out << "pathprof-net-v1;input=" << shape_to_string(input_shape) << ";";
    for (const LayerSpec& layer : layers) {
        out << layer_kind_name(layer);
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            out << "(" << d->in_dim << "," << d->out_dim << ")";
        } else if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
            out << "(" << c->in_channels << "," << c->out_channels << "," << c->kernel_h << ","
                << c->kernel_w << ",s" << c->stride << ",p" << c->padding << ")";
        } else if (const auto* p = std::get_if<MaxPool2DLayer>(&layer)) {
            out << "(" << p->kernel_h << "," << p->kernel_w << ",s" << p->stride << ")";
        } else if (const auto* p = std::get_if<AvgPool2DLayer>(&layer)) {
            out << "(" << p->kernel_h << "," << p->kernel_w << ",s" << p->stride << ")";
        } else if (const auto* r = std::get_if<ResidualAddLayer>(&layer)) {
            out << "(" << r->source_layer_index << ")";
        }
        out << ";";
    }
    return sha256(out.str());
}

namespace {

void he_uniform_fill(Eigen::MatrixXf& m, int fan_in, std::mt19937_64& rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-limit, limit);
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        for (Eigen::Index i = 0; i < m.cols(); ++i) {
            m(j, i) = dist(rng);
        }
    }
}

}  // namespace

Network make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2) {
        throw DomainError("make_mlp needs at least input and output dims");
    }
    std::mt19937_64 rng(seed);
    Network net;
    net.input_shape = {dims[0]};
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer d;
        d.in_dim = dims[i];
        d.out_dim = dims[i + 1];
        d.weights.resize(d.out_dim, d.in_dim);
        he_uniform_fill(d.weights, d.in_dim, rng);
        d.bias = Eigen::VectorXf::Zero(d.out_dim);
        net.layers.emplace_back(std::move(d));
        if (i + 2 < dims.size()) {
            net.layers.emplace_back(ReLULayer{});
        }
    }
    net.validate();
    return net;
}

Network make_lenet(int in_channels, int height, int width, int num_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Network net;
    net.input_shape = {in_channels, height, width};

    auto conv = [&](int ic, int oc, int k) {
        Conv2DLayer c;
        c.in_channels = ic;
        c.out_channels = oc;
        c.kernel_h = c.kernel_w = k;
        c.stride = 1;
        c.padding = 0;
        c.weights.resize(oc, ic * k * k);
        he_uniform_fill(c.weights, ic * k * k, rng);
        c.bias = Eigen::VectorXf::Zero(oc);
        return c;
    };
    auto dense = [&](int in, int out) {
        DenseLayer d;
        d.in_dim = in;
        d.out_dim = out;
        d.weights.resize(out, in);
        he_uniform_fill(d.weights, in, rng);
        d.bias = Eigen::VectorXf::Zero(out);
        return d;
    };

    net.layers.emplace_back(conv(in_channels, 4, 5));
    net.layers.emplace_back(ReLULayer{});
    net.layers.emplace_back(MaxPool2DLayer{2, 2, 2});
    int h = (conv_output_extent(height, 5, 1, 0) - 2) / 2 + 1;
    int w = (conv_output_extent(width, 5, 1, 0) - 2) / 2 + 1;
    net.layers.emplace_back(conv(4, 12, 5));
    net.layers.emplace_back(ReLULayer{});
    net.layers.emplace_back(MaxPool2DLayer{2, 2, 2});
    h = (conv_output_extent(h, 5, 1, 0) - 2) / 2 + 1;
    w = (conv_output_extent(w, 5, 1, 0) - 2) / 2 + 1;
    net.layers.emplace_back(FlattenLayer{});
    const int flat = 12 * h * w;
    net.layers.emplace_back(dense(flat, 120));
    net.layers.emplace_back(ReLULayer{});
    net.layers.emplace_back(dense(120, num_classes));
    net.validate();
    return net;
}

}  // namespace pathprof
