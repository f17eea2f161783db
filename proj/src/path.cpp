#include "pathprof/path.hpp"

#include "pathprof/errors.hpp"

namespace pathprof {

void ExtractionConfig::validate(int num_classes) const {
    if (!(theta > 0.0 && theta <= 1.0)) {
        throw DomainError("theta must be in (0, 1], got " + std::to_string(theta));
    }
    if (start_rank < 1 || start_rank > num_classes) {
        throw DomainError("start_rank " + std::to_string(start_rank) +
                          " out of range for " + std::to_string(num_classes) + " classes");
    }
    if (num_layers < 1) {
        throw DomainError("num_layers must be positive (or kAllLayers)");
    }
}

bool is_selecting_layer(const LayerSpec& layer) {
    return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<Conv2DLayer>(layer) ||
           std::holds_alternative<MaxPool2DLayer>(layer) ||
           std::holds_alternative<AvgPool2DLayer>(layer);
}

PathGeometry PathGeometry::of(const Network& net) {
    PathGeometry g;
    g.output_shapes = net.layer_output_shapes();
    g.input_shapes.resize(net.layers.size());
    g.capacity.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        g.input_shapes[i] = (i == 0) ? net.input_shape : g.output_shapes[i - 1];
        const std::int64_t out_size = flat_size(g.output_shapes[i]);
        LayerSetCapacity cap;
        if (const auto* d = std::get_if<DenseLayer>(&net.layers[i])) {
            cap.neurons = out_size;
            cap.synapses = static_cast<std::int64_t>(d->out_dim) * d->in_dim;
            cap.weights = cap.synapses;
        } else if (const auto* c = std::get_if<Conv2DLayer>(&net.layers[i])) {
            const std::int64_t kvol =
                static_cast<std::int64_t>(c->in_channels) * c->kernel_h * c->kernel_w;
            cap.neurons = out_size;
            cap.synapses = out_size * kvol;
            cap.weights = static_cast<std::int64_t>(c->out_channels) * kvol;
        } else if (const auto* p = std::get_if<MaxPool2DLayer>(&net.layers[i])) {
            cap.neurons = out_size;
            cap.synapses = out_size * p->kernel_h * p->kernel_w;
        } else if (const auto* p = std::get_if<AvgPool2DLayer>(&net.layers[i])) {
            cap.neurons = out_size;
            cap.synapses = out_size * p->kernel_h * p->kernel_w;
        }
        g.capacity[i] = cap;
        if (is_selecting_layer(net.layers[i])) {
            g.selecting_layers.push_back(static_cast<int>(i));
        }
    }
    return g;
}

namespace {

std::int64_t sum_counts(const std::vector<PathLayer>& layers, Bitset PathLayer::*member) {
    std::int64_t n = 0;
    for (const PathLayer& l : layers) {
        n += (l.*member).count();
    }
    return n;
}

void check_layers_match(const std::vector<PathLayer>& a, const std::vector<PathLayer>& b) {
    if (a.size() != b.size()) {
        throw DomainError("path layer counts differ: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].layer_index != b[i].layer_index ||
            a[i].neurons.capacity() != b[i].neurons.capacity() ||
            a[i].synapses.capacity() != b[i].synapses.capacity() ||
            a[i].weights.capacity() != b[i].weights.capacity()) {
            throw DomainError("path layer " + std::to_string(i) +
                              " index/capacity mismatch between operands");
        }
    }
}

template <typename A, typename B>
void check_headers(const A& a, const B& b) {
    if (a.fingerprint != b.fingerprint) {
        throw DomainError("network fingerprint mismatch between path objects");
    }
    if (a.theta != b.theta) {
        throw DomainError("theta mismatch: " + std::to_string(a.theta) + " vs " +
                          std::to_string(b.theta));
    }
    if (a.depth != b.depth) {
        throw DomainError("extraction depth mismatch: " + std::to_string(a.depth) + " vs " +
                          std::to_string(b.depth));
    }
}

}  // namespace

std::int64_t EffectivePath::total_neurons() const { return sum_counts(layers, &PathLayer::neurons); }
std::int64_t EffectivePath::total_synapses() const {
    return sum_counts(layers, &PathLayer::synapses);
}
std::int64_t EffectivePath::total_weights() const { return sum_counts(layers, &PathLayer::weights); }

std::int64_t ClassProfile::total_synapses() const { return sum_counts(layers, &PathLayer::synapses); }
std::int64_t ClassProfile::total_weights() const { return sum_counts(layers, &PathLayer::weights); }

void check_compatible(const EffectivePath& a, const EffectivePath& b) {
    check_headers(a, b);
    check_layers_match(a.layers, b.layers);
}

void check_compatible(const ClassProfile& a, const EffectivePath& b) {
    check_headers(a, b);
    check_layers_match(a.layers, b.layers);
}

void check_compatible(const ClassProfile& a, const ClassProfile& b) {
    check_headers(a, b);
    check_layers_match(a.layers, b.layers);
}

}  // namespace pathprof
