#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pathprof/dataset.hpp"
#include "pathprof/engine.hpp"

namespace pathprof {

struct AttackConfig {
    double epsilon = 0.1;    // L-infinity budget
    double step_size = 0.01; // BIM per-step alpha
    int iterations = 10;     // BIM
    bool targeted = false;
    std::optional<int> target_class;
    double clip_min = 0.0;
    double clip_max = 1.0;
    std::uint64_t seed = 0;

    // step_size <= epsilon is only required for BIM and checked there.
    void validate() const;
};

// x' = clip(x + eps * sign(grad)) non-targeted, x' = clip(x - eps * sign(grad))
// targeted. The stored float32 result satisfies |x' - x|_inf <= eps exactly.
Eigen::VectorXf fgsm(const Network& net, const Eigen::VectorXf& image,
                     std::optional<int> true_class, const AttackConfig& cfg);

// Iterated step_size-FGSM with projection onto the eps-ball around the
// original image intersected with the clip range after every step.
Eigen::VectorXf bim(const Network& net, const Eigen::VectorXf& image,
                    std::optional<int> true_class, const AttackConfig& cfg);

struct RandomImageResult {
    std::vector<Eigen::VectorXf> images;
    std::int64_t attempts = 0;
    double acceptance_rate = 0.0;
};

// I.i.d. uniform images over [clip_min, clip_max], filtered to top-1 softmax
// confidence >= confidence_floor. Throws DomainError with acceptance-rate
// diagnostics when 1000 * count attempts are exhausted.
RandomImageResult random_unrecognizable(const Network& net, int count, std::uint64_t seed,
                                        double confidence_floor, double clip_min = 0.0,
                                        double clip_max = 1.0);

struct AdversarialSample {
    int source_id = -1;  // index into the source dataset; -1 for random images
    std::string attack;  // "fgsm" | "bim" | "random"
    int original_class = -1;     // clean prediction (-1 for random images)
    int adversarial_class = -1;  // prediction on the generated image
    bool success = false;        // prediction changed
    Eigen::VectorXf image;
};

struct AdversarialSet {
    Shape image_shape;
    std::string attack;
    AttackConfig config;
    std::vector<AdversarialSample> samples;
};

// Runs the named attack over the first `count` images (0 = all); parallel over
// images, deterministic merge by index.
AdversarialSet attack_dataset(const Network& net, const LabeledDataset& data,
                              const std::string& attack, const AttackConfig& cfg, int count = 0,
                              int jobs = 0);

// Directory layout: samples.json metadata manifest + images.f32 raw blob
// (little-endian float32, one image after another in sample order).
void save_adversarial_set(const std::string& dir, const AdversarialSet& set);
AdversarialSet load_adversarial_set(const std::string& dir);

}  // namespace pathprof
