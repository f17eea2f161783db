#include "pathprof/path_algebra.hpp"

#include <algorithm>

#include "pathprof/errors.hpp"
#include "pathprof/extractor.hpp"
#include "pathprof/parallel.hpp"

namespace pathprof {

ClassProfile make_empty_profile(const Network& net, const ExtractionConfig& cfg, int class_id) {
    const PathGeometry geom = PathGeometry::of(net);
    if (geom.selecting_layers.empty()) {
        throw DomainError("network has no extractable layers");
    }
    const int depth =
        std::min<int>(cfg.num_layers, static_cast<int>(geom.selecting_layers.size()));
    ClassProfile profile;
    profile.fingerprint = net.fingerprint();
    profile.theta = cfg.theta;
    profile.depth = depth;
    profile.class_id = class_id;
    profile.image_count = 0;
    const std::size_t first =
        geom.selecting_layers.size() - static_cast<std::size_t>(depth);
    for (std::size_t s = first; s < geom.selecting_layers.size(); ++s) {
        const int li = geom.selecting_layers[s];
        const LayerSetCapacity& cap = geom.capacity[static_cast<std::size_t>(li)];
        PathLayer layer;
        layer.layer_index = li;
        layer.neurons = Bitset(cap.neurons);
        layer.synapses = Bitset(cap.synapses);
        layer.weights = Bitset(cap.weights);
        profile.layers.push_back(std::move(layer));
    }
    return profile;
}

void absorb(ClassProfile& profile, const EffectivePath& path) {
    check_compatible(profile, path);
    for (std::size_t i = 0; i < profile.layers.size(); ++i) {
        profile.layers[i].neurons.or_with(path.layers[i].neurons);
        profile.layers[i].synapses.or_with(path.layers[i].synapses);
        profile.layers[i].weights.or_with(path.layers[i].weights);
    }
    profile.image_count += 1;
}

namespace {

template <typename T>
ClassProfile profile_like(const T& a, int class_id) {
    ClassProfile p;
    p.fingerprint = a.fingerprint;
    p.theta = a.theta;
    p.depth = a.depth;
    p.class_id = class_id;
    p.image_count = 0;
    p.layers.reserve(a.layers.size());
    for (const PathLayer& l : a.layers) {
        PathLayer empty;
        empty.layer_index = l.layer_index;
        empty.neurons = Bitset(l.neurons.capacity());
        empty.synapses = Bitset(l.synapses.capacity());
        empty.weights = Bitset(l.weights.capacity());
        p.layers.push_back(std::move(empty));
    }
    return p;
}

void or_layers(ClassProfile& into, const std::vector<PathLayer>& layers) {
    for (std::size_t i = 0; i < into.layers.size(); ++i) {
        into.layers[i].neurons.or_with(layers[i].neurons);
        into.layers[i].synapses.or_with(layers[i].synapses);
        into.layers[i].weights.or_with(layers[i].weights);
    }
}

}  // namespace

ClassProfile union_of(const EffectivePath& a, const EffectivePath& b) {
    check_compatible(a, b);
    ClassProfile p = profile_like(a, kOverallProfile);
    or_layers(p, a.layers);
    or_layers(p, b.layers);
    p.image_count = 2;
    return p;
}

ClassProfile union_of(const ClassProfile& a, const EffectivePath& b) {
    check_compatible(a, b);
    ClassProfile p = a;
    or_layers(p, b.layers);
    p.image_count = a.image_count + 1;
    return p;
}

ClassProfile union_of(const ClassProfile& a, const ClassProfile& b) {
    check_compatible(a, b);
    ClassProfile p = a;
    or_layers(p, b.layers);
    p.image_count = a.image_count + b.image_count;
    return p;
}

AggregateResult aggregate_class_profiles(const Network& net, const LabeledDataset& data,
                                         const ExtractionConfig& cfg, int jobs) {
    data.validate();
    const int classes = net.num_classes();
    if (data.num_classes > classes) {
        throw DomainError("dataset has more classes than the network emits");
    }
    ExtractionConfig rank1_cfg = cfg;
    rank1_cfg.start_rank = 1;
    rank1_cfg.validate(classes);

    AggregateResult result;
    result.classes.reserve(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        result.classes.push_back(make_empty_profile(net, rank1_cfg, c));
    }
    result.overall = make_empty_profile(net, rank1_cfg, kOverallProfile);
    result.per_class_images.assign(static_cast<std::size_t>(classes), 0);

    // Extract a chunk in parallel, then absorb serially: union is commutative
    // and associative, so the result is identical for any job count while the
    // peak memory stays bounded.
    const std::size_t chunk = 256;
    std::vector<EffectivePath> paths(chunk);
    std::vector<std::uint8_t> keep(chunk);
    for (std::size_t base = 0; base < data.size(); base += chunk) {
        const std::size_t n = std::min(chunk, data.size() - base);
        parallel_for(static_cast<std::int64_t>(n), jobs, [&](std::int64_t k) {
            const std::size_t idx = base + static_cast<std::size_t>(k);
            const ActivationTrace trace =
                forward_trace(net, data.images[idx].cast<double>().eval());
            if (trace.predicted_rank[0] == data.labels[idx]) {
                paths[static_cast<std::size_t>(k)] = extract_effective_path(net, trace, rank1_cfg);
                keep[static_cast<std::size_t>(k)] = 1;
            } else {
                keep[static_cast<std::size_t>(k)] = 0;
            }
        });
        for (std::size_t k = 0; k < n; ++k) {
            if (!keep[k]) {
                ++result.misclassified;
                continue;
            }
            const int label = data.labels[base + k];
            absorb(result.classes[static_cast<std::size_t>(label)], paths[k]);
            absorb(result.overall, paths[k]);
            ++result.per_class_images[static_cast<std::size_t>(label)];
            ++result.correct;
        }
    }
    return result;
}

DensityReport density(const ClassProfile& profile, const Network& net) {
    if (profile.fingerprint != net.fingerprint()) {
        throw DomainError("density: profile fingerprint does not match network");
    }
    const PathGeometry geom = PathGeometry::of(net);
    DensityReport report;
    std::int64_t syn = 0, syn_cap = 0, wt = 0, wt_cap = 0;
    for (const PathLayer& l : profile.layers) {
        const LayerSetCapacity& cap = geom.capacity[static_cast<std::size_t>(l.layer_index)];
        LayerDensity d;
        d.layer_index = l.layer_index;
        d.synapses = l.synapses.count();
        d.synapse_capacity = cap.synapses;
        d.weights = l.weights.count();
        d.weight_capacity = cap.weights;
        d.synapse_density =
            cap.synapses == 0 ? 0.0
                              : static_cast<double>(d.synapses) / static_cast<double>(cap.synapses);
        d.weight_density =
            cap.weights == 0 ? 0.0
                             : static_cast<double>(d.weights) / static_cast<double>(cap.weights);
        syn += d.synapses;
        syn_cap += cap.synapses;
        wt += d.weights;
        wt_cap += cap.weights;
        report.layers.push_back(d);
    }
    report.synapse_density =
        syn_cap == 0 ? 0.0 : static_cast<double>(syn) / static_cast<double>(syn_cap);
    report.weight_density =
        wt_cap == 0 ? 0.0 : static_cast<double>(wt) / static_cast<double>(wt_cap);
    return report;
}

double jaccard_classwise(const ClassProfile& a, const ClassProfile& b) {
    check_compatible(a, b);
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        inter += a.layers[i].synapses.intersect_count(b.layers[i].synapses);
        uni += a.layers[i].synapses.union_count(b.layers[i].synapses);
    }
    if (uni == 0) {
        throw DomainError("jaccard_classwise: both profiles have empty synapse sets");
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Eigen::VectorXd jaccard_classwise_per_layer(const ClassProfile& a, const ClassProfile& b) {
    check_compatible(a, b);
    Eigen::VectorXd out(static_cast<Eigen::Index>(a.layers.size()));
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const std::int64_t inter = a.layers[i].synapses.intersect_count(b.layers[i].synapses);
        const std::int64_t uni = a.layers[i].synapses.union_count(b.layers[i].synapses);
        out[static_cast<Eigen::Index>(i)] =
            uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return out;
}

namespace {

SimilarityVector similarity_on(const EffectivePath& image_path, const ClassProfile& profile,
                               Bitset PathLayer::*member) {
    check_compatible(profile, image_path);
    SimilarityVector out;
    out.values.resize(static_cast<Eigen::Index>(image_path.layers.size()));
    out.empty_layer.assign(image_path.layers.size(), 0);
    for (std::size_t i = 0; i < image_path.layers.size(); ++i) {
        const Bitset& img = image_path.layers[i].*member;
        const Bitset& prof = profile.layers[i].*member;
        const std::int64_t img_count = img.count();
        if (img_count == 0) {
            out.values[static_cast<Eigen::Index>(i)] = 1.0;  // vacuous containment
            out.empty_layer[i] = 1;
            continue;
        }
        const std::int64_t inter = img.intersect_count(prof);
        out.values[static_cast<Eigen::Index>(i)] =
            static_cast<double>(inter) / static_cast<double>(img_count);
    }
    return out;
}

}  // namespace

SimilarityVector image_class_similarity_per_layer(const EffectivePath& image_path,
                                                  const ClassProfile& profile) {
    return similarity_on(image_path, profile, &PathLayer::synapses);
}

SimilarityVector weight_based_similarity_per_layer(const EffectivePath& image_path,
                                                   const ClassProfile& profile) {
    return similarity_on(image_path, profile, &PathLayer::weights);
}

}  // namespace pathprof
