#include <doctest.h>

#include <random>
#include <set>

#include "pathprof/errors.hpp"
#include "pathprof/extractor.hpp"
#include "pathprof/path_algebra.hpp"
#include "pathprof/path_io.hpp"
#include "test_util.hpp"

using namespace pathprof;
using namespace testutil;

namespace {

struct Fixture {
    Network net;
    std::vector<EffectivePath> paths;

    explicit Fixture(std::uint64_t seed, int images = 6) {
        std::mt19937_64 rng(seed);
        net = make_mlp({6, 8, 5, 4}, seed);
        ExtractionConfig cfg;
        for (int i = 0; i < images; ++i) {
            const Eigen::VectorXd x = random_input(net, rng);
            paths.push_back(extract_effective_path(net, forward_trace(net, x), cfg));
        }
    }
};

std::set<std::int64_t> to_set(const Bitset& b) {
    std::set<std::int64_t> s;
    b.for_each([&](std::int64_t i) { s.insert(i); });
    return s;
}

bool same_sets(const std::vector<PathLayer>& a, const std::vector<PathLayer>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].neurons != b[i].neurons || a[i].synapses != b[i].synapses ||
            a[i].weights != b[i].weights) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("union is idempotent and the empty profile is its identity") {
    const Fixture f(11);
    const ClassProfile self = union_of(f.paths[0], f.paths[0]);
    ClassProfile single = make_empty_profile(f.net, ExtractionConfig{}, 0);
    absorb(single, f.paths[0]);
    CHECK(same_sets(self.layers, single.layers));

    const ClassProfile empty = make_empty_profile(f.net, ExtractionConfig{}, 0);
    const ClassProfile merged = union_of(empty, f.paths[0]);
    CHECK(same_sets(merged.layers, single.layers));
    CHECK(merged.image_count == 1);
}

TEST_CASE("union of three paths equals the elementwise OR oracle") {
    const Fixture f(13, 3);
    ClassProfile profile = make_empty_profile(f.net, ExtractionConfig{}, kOverallProfile);
    for (const auto& p : f.paths) {
        absorb(profile, p);
    }
    for (std::size_t l = 0; l < profile.layers.size(); ++l) {
        std::set<std::int64_t> expect_syn, expect_n, expect_w;
        for (const auto& p : f.paths) {
            const auto s = to_set(p.layers[l].synapses);
            expect_syn.insert(s.begin(), s.end());
            const auto n = to_set(p.layers[l].neurons);
            expect_n.insert(n.begin(), n.end());
            const auto w = to_set(p.layers[l].weights);
            expect_w.insert(w.begin(), w.end());
        }
        CHECK(to_set(profile.layers[l].synapses) == expect_syn);
        CHECK(to_set(profile.layers[l].neurons) == expect_n);
        CHECK(to_set(profile.layers[l].weights) == expect_w);
    }
    CHECK(profile.image_count == 3);
}

TEST_CASE("union is commutative and associative; absorption holds") {
    const Fixture f(17, 4);
    const ClassProfile ab = union_of(union_of(f.paths[0], f.paths[1]), f.paths[2]);
    const ClassProfile ba = union_of(union_of(f.paths[2], f.paths[1]), f.paths[0]);
    CHECK(same_sets(ab.layers, ba.layers));
    // Absorbing a constituent changes nothing.
    const ClassProfile again = union_of(ab, f.paths[1]);
    CHECK(same_sets(ab.layers, again.layers));
}

TEST_CASE("union rejects mismatched fingerprints and thetas") {
    const Fixture f(19, 1);
    // A different topology (the fingerprint hashes topology, not weights).
    std::mt19937_64 rng(23);
    const Network other_net = make_mlp({6, 9, 4}, 23);
    const Eigen::VectorXd x = random_input(other_net, rng);
    const EffectivePath other_path =
        extract_effective_path(other_net, forward_trace(other_net, x), ExtractionConfig{});
    CHECK_THROWS_AS(union_of(f.paths[0], other_path), DomainError);

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(flat_size(f.net.input_shape));
    const ActivationTrace trace = forward_trace(f.net, ones);
    ExtractionConfig other;
    other.theta = 0.9;
    const EffectivePath p_other = extract_effective_path(f.net, trace, other);
    CHECK_THROWS_AS(union_of(f.paths[0], p_other), DomainError);
}

TEST_CASE("density of full and empty profiles") {
    const Fixture f(29, 2);
    ClassProfile profile = make_empty_profile(f.net, ExtractionConfig{}, 0);
    const DensityReport empty = density(profile, f.net);
    CHECK(empty.synapse_density == 0.0);
    CHECK(empty.weight_density == 0.0);

    for (PathLayer& l : profile.layers) {
        for (std::int64_t i = 0; i < l.synapses.capacity(); ++i) {
            l.synapses.set(i);
        }
        for (std::int64_t i = 0; i < l.weights.capacity(); ++i) {
            l.weights.set(i);
        }
    }
    const DensityReport full = density(profile, f.net);
    CHECK(full.synapse_density == 1.0);
    CHECK(full.weight_density == 1.0);
}

TEST_CASE("density is nondecreasing under incremental merging, componentwise") {
    const Fixture f(31, 6);
    ClassProfile profile = make_empty_profile(f.net, ExtractionConfig{}, kOverallProfile);
    DensityReport prev = density(profile, f.net);
    for (const auto& p : f.paths) {
        absorb(profile, p);
        const DensityReport d = density(profile, f.net);
        CHECK(d.synapse_density >= prev.synapse_density);
        CHECK(d.weight_density >= prev.weight_density);
        for (std::size_t l = 0; l < d.layers.size(); ++l) {
            CHECK(d.layers[l].synapse_density >= prev.layers[l].synapse_density);
            CHECK(d.layers[l].weight_density >= prev.layers[l].weight_density);
        }
        prev = d;
    }
}

TEST_CASE("jaccard self-similarity, disjoint sets, symmetry, empty error") {
    const Fixture f(37, 4);
    ClassProfile a = make_empty_profile(f.net, ExtractionConfig{}, 0);
    absorb(a, f.paths[0]);
    absorb(a, f.paths[1]);
    ClassProfile b = make_empty_profile(f.net, ExtractionConfig{}, 1);
    absorb(b, f.paths[2]);
    absorb(b, f.paths[3]);

    CHECK(jaccard_classwise(a, a) == 1.0);
    CHECK(jaccard_classwise(a, b) == jaccard_classwise(b, a));
    const double j = jaccard_classwise(a, b);
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);

    // Hand-built disjoint profiles.
    ClassProfile d1 = make_empty_profile(f.net, ExtractionConfig{}, 0);
    ClassProfile d2 = make_empty_profile(f.net, ExtractionConfig{}, 1);
    d1.layers[0].synapses.set(0);
    d1.image_count = 1;
    d2.layers[0].synapses.set(1);
    d2.image_count = 1;
    CHECK(jaccard_classwise(d1, d2) == 0.0);

    const ClassProfile e1 = make_empty_profile(f.net, ExtractionConfig{}, 0);
    const ClassProfile e2 = make_empty_profile(f.net, ExtractionConfig{}, 1);
    CHECK_THROWS_AS(jaccard_classwise(e1, e2), DomainError);
}

TEST_CASE("image-class similarity: containment, disjoint, member exactness") {
    const Fixture f(41, 5);
    ClassProfile profile = make_empty_profile(f.net, ExtractionConfig{}, 0);
    for (const auto& p : f.paths) {
        absorb(profile, p);
    }
    // Constituents score exactly 1.0 per layer.
    for (const auto& p : f.paths) {
        const SimilarityVector sim = image_class_similarity_per_layer(p, profile);
        for (Eigen::Index l = 0; l < sim.values.size(); ++l) {
            CHECK(sim.values[l] == 1.0);
        }
    }
    // A synapse outside the profile pulls the layer below 1.
    EffectivePath outside = f.paths[0];
    for (std::int64_t s = 0; s < outside.layers[0].synapses.capacity(); ++s) {
        if (!profile.layers[0].synapses.test(s)) {
            outside.layers[0].synapses.set(s);
            break;
        }
    }
    const SimilarityVector sim = image_class_similarity_per_layer(outside, profile);
    CHECK(sim.values[0] < 1.0);

    // Disjoint layer -> 0; empty image layer -> 1 with flag.
    EffectivePath disjoint = f.paths[0];
    for (auto& l : disjoint.layers) {
        l.synapses = Bitset(l.synapses.capacity());
    }
    std::int64_t free_bit = -1;
    for (std::int64_t s = 0; s < profile.layers[0].synapses.capacity(); ++s) {
        if (!profile.layers[0].synapses.test(s)) {
            free_bit = s;
            break;
        }
    }
    REQUIRE(free_bit >= 0);
    disjoint.layers[0].synapses.set(free_bit);
    const SimilarityVector dsim = image_class_similarity_per_layer(disjoint, profile);
    CHECK(dsim.values[0] == 0.0);
    CHECK(dsim.empty_layer[0] == 0);
    CHECK(dsim.values[1] == 1.0);  // empty layer: vacuous containment
    CHECK(dsim.empty_layer[1] == 1);
}

TEST_CASE("weight-based similarity equals synapse-based on dense layers") {
    const Fixture f(43, 3);
    ClassProfile profile = make_empty_profile(f.net, ExtractionConfig{}, 0);
    absorb(profile, f.paths[0]);
    absorb(profile, f.paths[1]);
    const SimilarityVector syn = image_class_similarity_per_layer(f.paths[2], profile);
    const SimilarityVector wt = weight_based_similarity_per_layer(f.paths[2], profile);
    REQUIRE(syn.values.size() == wt.values.size());
    for (Eigen::Index l = 0; l < syn.values.size(); ++l) {
        CHECK(syn.values[l] == wt.values[l]);  // 1:1 synapse/weight mapping
    }
}

TEST_CASE("conv weight sharing separates weight- and synapse-based similarity") {
    // 1-channel 1x3 conv over a 1x1x4 input: the two output positions share
    // each kernel weight. Conv output flat ids {0,1}; synapse id =
    // out * 3 + offset; weight id = offset.
    Network net;
    net.input_shape = {1, 1, 4};
    Conv2DLayer c;
    c.in_channels = 1;
    c.out_channels = 1;
    c.kernel_h = 1;
    c.kernel_w = 3;
    c.stride = 1;
    c.padding = 0;
    c.weights = Eigen::MatrixXf(1, 3);
    c.weights << 1.0f, 1.0f, 1.0f;
    c.bias = Eigen::VectorXf::Zero(1);
    net.layers.emplace_back(std::move(c));
    net.layers.emplace_back(FlattenLayer{});
    DenseLayer d;
    d.in_dim = 2;
    d.out_dim = 2;
    d.weights = Eigen::MatrixXf(2, 2);
    d.weights << 0, 1, 1, 0;  // class 0 reads conv out1, class 1 reads out0
    d.bias = Eigen::VectorXf::Zero(2);
    net.layers.emplace_back(std::move(d));

    ExtractionConfig cfg;
    cfg.theta = 1.0;

    // Profile image: only conv out0 via offset 0 fires, predicted class 1.
    // Path: conv synapse {(out0,off0)} = {0}, conv weight {0}.
    Eigen::VectorXd xa(4);
    xa << 5, 0, 0, 0;
    const ActivationTrace ta = forward_trace(net, xa);
    REQUIRE(ta.predicted_rank[0] == 1);
    const EffectivePath pa = extract_effective_path(net, ta, cfg);
    CHECK(to_set(pa.layers[0].synapses) == std::set<std::int64_t>{0});
    CHECK(to_set(pa.layers[0].weights) == std::set<std::int64_t>{0});
    ClassProfile profile = make_empty_profile(net, cfg, 1);
    absorb(profile, pa);

    // Image demanding conv out1 with offsets {0,1}: synapses {3,4} (disjoint
    // from the profile) but weights {0,1} share weight 0 with it.
    Eigen::VectorXd xd(4);
    xd << 0, 2, 1, 0;  // out0 = 3 = out1; class tie -> class 0 -> conv out1
    const ActivationTrace td = forward_trace(net, xd);
    REQUIRE(td.predicted_rank[0] == 0);
    const EffectivePath pd = extract_effective_path(net, td, cfg);
    CHECK(to_set(pd.layers[0].synapses) == std::set<std::int64_t>{3, 4});
    CHECK(to_set(pd.layers[0].weights) == std::set<std::int64_t>{0, 1});

    const SimilarityVector syn_d = image_class_similarity_per_layer(pd, profile);
    const SimilarityVector wt_d = weight_based_similarity_per_layer(pd, profile);
    CHECK(syn_d.values[0] == 0.0);  // {3,4} vs {0}
    CHECK(wt_d.values[0] == 0.5);   // {0,1} vs {0}
}

TEST_CASE("EPATH1 round-trips paths and profiles exactly") {
    const Fixture f(47, 2);
    const EffectivePath& p = f.paths[0];
    const auto bytes = serialize_path(p);
    const EffectivePath q = deserialize_path(bytes);
    CHECK(q.fingerprint == p.fingerprint);
    CHECK(q.theta == p.theta);
    CHECK(q.start_rank == p.start_rank);
    CHECK(q.depth == p.depth);
    CHECK(same_sets(q.layers, p.layers));

    ClassProfile profile = make_empty_profile(f.net, ExtractionConfig{}, 3);
    absorb(profile, f.paths[0]);
    absorb(profile, f.paths[1]);
    const auto pbytes = serialize_profile(profile);
    const ClassProfile back = deserialize_profile(pbytes);
    CHECK(back.class_id == 3);
    CHECK(back.image_count == 2);
    CHECK(same_sets(back.layers, profile.layers));

    // Empty profile round-trips too.
    const ClassProfile empty = make_empty_profile(f.net, ExtractionConfig{}, kOverallProfile);
    const ClassProfile eback = deserialize_profile(serialize_profile(empty));
    CHECK(eback.image_count == 0);
    CHECK(eback.class_id == kOverallProfile);
    CHECK(same_sets(eback.layers, empty.layers));
}

TEST_CASE("EPATH1 corruption yields format errors, never partial objects") {
    const Fixture f(53, 1);
    auto bytes = serialize_path(f.paths[0]);

    auto corrupt_magic = bytes;
    corrupt_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_path(corrupt_magic), FormatError);

    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK_THROWS_AS(deserialize_path(truncated), FormatError);

    // Corrupt the first bitset's length field (offsets: 6 magic + 1 version +
    // 32 fp + 8 theta + 4 depth + 4 layers + 1 kind + 4 rank + 4 class +
    // 8 count + 4 layer index = 76).
    auto bad_length = bytes;
    bad_length[76 + 6] = 0xff;  // blow up the u64 little-endian length
    CHECK_THROWS_AS(deserialize_path(bad_length), FormatError);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_path(trailing), FormatError);

    // Kind mismatch: a path is not a profile.
    CHECK_THROWS_AS(deserialize_profile(bytes), FormatError);
}

TEST_CASE("aggregate excludes misclassified images and fills every class") {
    std::mt19937_64 rng(61);
    const Network net = make_mlp({4, 10, 3}, 5);
    LabeledDataset data;
    data.image_shape = {4};
    data.num_classes = 3;
    for (int i = 0; i < 60; ++i) {
        Eigen::VectorXf img(4);
        for (int p = 0; p < 4; ++p) {
            img[p] = static_cast<float>(uniform_unit(rng));
        }
        data.images.push_back(img);
        // Label = model prediction for half of them, a wrong label otherwise.
        const int pred = predict_class(net, img.cast<double>().eval());
        data.labels.push_back(i % 2 == 0 ? pred : (pred + 1) % 3);
    }
    const AggregateResult agg = aggregate_class_profiles(net, data, ExtractionConfig{}, 1);
    CHECK(agg.correct == 30);
    CHECK(agg.misclassified == 30);
    CHECK(agg.overall.image_count == 30);
    std::int64_t sum = 0;
    for (int c = 0; c < 3; ++c) {
        sum += agg.per_class_images[static_cast<std::size_t>(c)];
        CHECK(agg.classes[static_cast<std::size_t>(c)].class_id == c);
    }
    CHECK(sum == 30);

    // Order invariance: permuting the dataset leaves profiles unchanged.
    LabeledDataset shuffled = data;
    std::mt19937_64 rng2(99);
    std::vector<std::size_t> perm = shuffled_indices(data.size(), rng2);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.images[i] = data.images[perm[i]];
        shuffled.labels[i] = data.labels[perm[i]];
    }
    const AggregateResult agg2 = aggregate_class_profiles(net, shuffled, ExtractionConfig{}, 2);
    for (int c = 0; c < 3; ++c) {
        CHECK(same_sets(agg.classes[static_cast<std::size_t>(c)].layers,
                        agg2.classes[static_cast<std::size_t>(c)].layers));
    }
    CHECK(same_sets(agg.overall.layers, agg2.overall.layers));
}

TEST_CASE("single-image class profile equals that image's path") {
    std::mt19937_64 rng(67);
    const Network net = make_mlp({4, 8, 3}, 21);
    Eigen::VectorXf img(4);
    for (int p = 0; p < 4; ++p) {
        img[p] = static_cast<float>(uniform_unit(rng));
    }
    const int pred = predict_class(net, img.cast<double>().eval());
    LabeledDataset data;
    data.image_shape = {4};
    data.num_classes = 3;
    data.images.push_back(img);
    data.labels.push_back(pred);
    const AggregateResult agg = aggregate_class_profiles(net, data, ExtractionConfig{}, 1);
    const EffectivePath path = extract_effective_path(
        net, forward_trace(net, img.cast<double>().eval()), ExtractionConfig{});
    CHECK(same_sets(agg.classes[static_cast<std::size_t>(pred)].layers, path.layers));
}

TEST_CASE("per-layer class-wise jaccard brackets the pooled value") {
    const Fixture f(71, 6);
    ClassProfile a = make_empty_profile(f.net, ExtractionConfig{}, 0);
    absorb(a, f.paths[0]);
    absorb(a, f.paths[1]);
    absorb(a, f.paths[2]);
    ClassProfile b = make_empty_profile(f.net, ExtractionConfig{}, 1);
    absorb(b, f.paths[3]);
    absorb(b, f.paths[4]);
    absorb(b, f.paths[5]);
    const double pooled = jaccard_classwise(a, b);
    const Eigen::VectorXd per_layer = jaccard_classwise_per_layer(a, b);
    CHECK(per_layer.minCoeff() >= 0.0);
    CHECK(per_layer.maxCoeff() <= 1.0);
    CHECK(pooled >= per_layer.minCoeff());
    CHECK(pooled <= per_layer.maxCoeff());
    // Self-similarity is exactly one per layer.
    const Eigen::VectorXd self = jaccard_classwise_per_layer(a, a);
    for (Eigen::Index l = 0; l < self.size(); ++l) {
        CHECK(self[l] == 1.0);
    }
}
