#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pathprof/dataset.hpp"
#include "pathprof/path.hpp"

namespace pathprof {

// Empty profile shaped for (net, cfg): one entry per extracted selecting
// layer, all-zero sets, image_count 0.
ClassProfile make_empty_profile(const Network& net, const ExtractionConfig& cfg, int class_id);

// In-place union of one image's path; bumps image_count.
void absorb(ClassProfile& profile, const EffectivePath& path);

// Per-layer set union; image_count adds (a path counts as one image).
ClassProfile union_of(const EffectivePath& a, const EffectivePath& b);
ClassProfile union_of(const ClassProfile& a, const EffectivePath& b);
ClassProfile union_of(const ClassProfile& a, const ClassProfile& b);

struct AggregateResult {
    std::vector<ClassProfile> classes;  // indexed by class id
    ClassProfile overall;
    std::vector<std::int64_t> per_class_images;  // correctly predicted per class
    std::int64_t correct = 0;
    std::int64_t misclassified = 0;  // excluded from every profile
};

// Rank-1 extraction of every image whose prediction matches its label, unioned
// per class and into the OVERALL profile. cfg.start_rank is forced to 1.
AggregateResult aggregate_class_profiles(const Network& net, const LabeledDataset& data,
                                         const ExtractionConfig& cfg, int jobs = 0);

struct LayerDensity {
    int layer_index = -1;
    std::int64_t synapses = 0;
    std::int64_t synapse_capacity = 0;
    std::int64_t weights = 0;
    std::int64_t weight_capacity = 0;
    double synapse_density = 0.0;
    double weight_density = 0.0;  // 0 for layers with no weights (pools)
};

struct DensityReport {
    std::vector<LayerDensity> layers;
    double synapse_density = 0.0;  // sum |S^l| / sum capacity
    double weight_density = 0.0;
};

DensityReport density(const ClassProfile& profile, const Network& net);

// Jaccard coefficient of the synapse sets pooled over all layers.
// Throws DomainError when both profiles have no synapses at all.
double jaccard_classwise(const ClassProfile& a, const ClassProfile& b);

// Per-layer variant for layer-level analysis; layers where both synapse sets
// are empty report 1.0 (both profiles agree there vacuously).
Eigen::VectorXd jaccard_classwise_per_layer(const ClassProfile& a, const ClassProfile& b);

struct SimilarityVector {
    Eigen::VectorXd values;                 // one per extracted layer, ascending layer order
    std::vector<std::uint8_t> empty_layer;  // 1 where the image layer set was empty (value 1.0)
};

// Per layer: fraction of the image's synapses present in the profile. An
// empty image layer is vacuously contained (1.0) and flagged.
SimilarityVector image_class_similarity_per_layer(const EffectivePath& image_path,
                                                  const ClassProfile& profile);

// Same with weight sets (conv weight sharing makes this differ from the
// synapse version; pool layers own no weights and always flag).
SimilarityVector weight_based_similarity_per_layer(const EffectivePath& image_path,
                                                   const ClassProfile& profile);

}  // namespace pathprof
