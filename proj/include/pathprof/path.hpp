#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "pathprof/bitset.hpp"
#include "pathprof/network.hpp"

namespace pathprof {

// num_layers sentinel: extract through every selecting layer.
inline constexpr int kAllLayers = std::numeric_limits<int>::max();

// class_id marker for the whole-training-set profile.
inline constexpr int kOverallProfile = -1;

struct ExtractionConfig {
    double theta = 0.5;
    int start_rank = 1;          // 1 = predicted class, 2 = rank-2 class
    int num_layers = kAllLayers;  // counted backward from the last selecting layer

    void validate(int num_classes) const;
};

// Layers that select contributors and own per-layer path sets. ReLU, Flatten
// and ResidualAdd are transparent to the backward walk.
bool is_selecting_layer(const LayerSpec& layer);

struct LayerSetCapacity {
    std::int64_t neurons = 0;
    std::int64_t synapses = 0;
    std::int64_t weights = 0;
};

// Precomputed per-network geometry for path set indexing.
//
// Synapse ids are canonical: output flat index major, receptive-field offset
// minor. Dense offset = input flat index; conv offset = (ic*kh + ky)*kw + kx;
// pool offset = ky*kw + kx. Weight ids are flat coordinates into the layer's
// weight tensor (pools have none).
struct PathGeometry {
    std::vector<Shape> input_shapes;     // per layer
    std::vector<Shape> output_shapes;    // per layer
    std::vector<LayerSetCapacity> capacity;  // per layer; zeros for pass-through layers
    std::vector<int> selecting_layers;   // ascending network indices

    static PathGeometry of(const Network& net);
};

struct PathLayer {
    int layer_index = -1;
    Bitset neurons;
    Bitset synapses;
    Bitset weights;
};

// P = (N, S, W) for one extraction. layers are in ascending network order and
// cover exactly `depth` selecting layers counted back from the last.
struct EffectivePath {
    Digest256 fingerprint{};
    double theta = 0.5;
    int start_rank = 1;
    int depth = 0;
    std::vector<PathLayer> layers;

    // Demanded outputs with non-positive value that expanded to empty sets.
    // Diagnostic only; not serialized.
    std::int64_t degenerate_outputs = 0;

    std::int64_t total_neurons() const;
    std::int64_t total_synapses() const;
    std::int64_t total_weights() const;
};

// Union-aggregated path for an image group (one class, or OVERALL).
struct ClassProfile {
    Digest256 fingerprint{};
    double theta = 0.5;
    int depth = 0;
    int class_id = kOverallProfile;
    std::uint64_t image_count = 0;
    std::vector<PathLayer> layers;

    bool empty() const { return image_count == 0; }
    std::int64_t total_synapses() const;
    std::int64_t total_weights() const;
};

// Throws DomainError unless fingerprint, theta, depth and per-layer indices /
// capacities all agree.
void check_compatible(const EffectivePath& a, const EffectivePath& b);
void check_compatible(const ClassProfile& a, const EffectivePath& b);
void check_compatible(const ClassProfile& a, const ClassProfile& b);

}  // namespace pathprof
