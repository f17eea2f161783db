#pragma once

#include <vector>

#include "pathprof/engine.hpp"
#include "pathprof/path.hpp"

namespace pathprof {

// The smallest-cardinality index set whose input*weight products sum to at
// least theta * output_value: pairs are ranked by descending product (ties by
// ascending index) and the shortest sufficient prefix is taken. Non-positive
// products are never selected. Returns ascending indices.
//
// Throws DomainError when output_value <= 0 or theta is outside (0, 1], and
// InternalInvariantError when even all positive products cannot reach the
// threshold (impossible when the caller includes the bias as a virtual input).
std::vector<int> select_min_contributors(const std::vector<double>& input_values,
                                         const std::vector<double>& weights, double output_value,
                                         double theta);

struct LayerExtraction {
    Bitset synapses;        // this layer's selected synapse ids
    Bitset weights;         // this layer's selected weight coordinates
    Bitset active_inputs;   // selected input neurons (flat, layer input space)
    std::int64_t degenerate_outputs = 0;  // demanded outputs with non-positive value
};

// Runs the per-output-neuron contributor selection for one selecting layer.
// Dense and conv outputs rank their receptive field plus a virtual bias input
// (bias selections are recorded in neither synapses nor weights); max-pool
// contributes exactly its argmax input with no weight entry; avg-pool is a
// conv with all-ones weights and no recorded weight coordinates.
LayerExtraction extract_layer(const Network& net, const PathGeometry& geom, int layer_index,
                              const ActivationTrace& trace, const Bitset& active_outputs,
                              double theta);

// Backward walk from the rank-cfg.start_rank class neuron through
// cfg.num_layers selecting layers. ReLU/Flatten pass demand through;
// ResidualAdd merges demand into both of its producers.
EffectivePath extract_effective_path(const Network& net, const ActivationTrace& trace,
                                     const ExtractionConfig& cfg);

}  // namespace pathprof
