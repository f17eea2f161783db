#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pathprof/path.hpp"
#include "pathprof/path_algebra.hpp"

namespace pathprof {

struct SimilarityFeatures {
    Eigen::VectorXd rank1;  // per extracted layer vs. the rank-1 class profile
    Eigen::VectorXd rank2;  // per extracted layer vs. the rank-2 class profile
    std::vector<std::uint8_t> rank1_missing;  // empty image layer or empty profile
    std::vector<std::uint8_t> rank2_missing;

    int layer_count() const { return static_cast<int>(rank1.size()); }
};

// Two extractions (start rank 1 and 2) scored against the corresponding
// predicted classes' profiles. An empty profile yields zeros with missing
// flags; an empty image layer yields 1.0 with a missing flag. use_weight_sets
// switches to the weight-based similarity variant.
SimilarityFeatures featurize(const Network& net, const Eigen::VectorXd& image,
                             const std::vector<ClassProfile>& class_profiles,
                             const ExtractionConfig& cfg, bool use_weight_sets = false);

struct DetectorConfig {
    int epochs = 10000;
    double l1_ratio = 0.5;
    double regularization = 1e-4;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
};

struct LinearDetector {
    Eigen::VectorXd omega;        // rank-1 coefficients, >= 0
    Eigen::VectorXd omega_prime;  // rank-2 coefficients, >= 0
    double threshold = 0.0;       // adversarial iff score < threshold (strict)
    double intercept = 0.0;  // training nuisance; excluded from joint_similarity
    DetectorConfig config;   // training metadata
};

// sum_l omega[l] * rank1[l] - sum_l omega_prime[l] * rank2[l]; missing-flagged
// components contribute 0.
double joint_similarity(const LinearDetector& det, const SimilarityFeatures& f);

// Seeded SGD on the logistic loss of (normal=1, adversarial=0) against the
// score, elastic-net penalty, nonnegative projection after every step;
// threshold set post-hoc by maximizing Youden's J on the training data.
LinearDetector train_linear_detector(const std::vector<SimilarityFeatures>& features,
                                     const std::vector<int>& labels, const DetectorConfig& cfg);

// Adversarial iff joint_similarity < threshold (a score at the threshold is
// normal).
bool detect_adversarial(const LinearDetector& det, const SimilarityFeatures& f);

struct RocResult {
    double auc = 0.0;
    std::vector<std::pair<double, double>> curve;  // (fpr, tpr), threshold descending
};

// AUC with label 1 as the positive (high-score) class; tied scores grouped,
// equivalent to the midrank statistic. Throws unless both labels occur.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct FeatureRecord {
    std::string id;
    int label = 1;  // 1 normal, 0 adversarial
    std::string attack = "none";
    int predicted = -1;
    SimilarityFeatures features;
};

// CSV schema: id,label,attack,predicted, rank1_1..L, rank2_1..L,
// miss1_1..L, miss2_1..L. Header mandatory; floats carry 9 significant digits.
void export_features_csv(const std::string& path, const std::vector<FeatureRecord>& records,
                         int layer_count);
std::vector<FeatureRecord> load_features_csv(const std::string& path);

// Detector JSON persistence (weights, threshold, training metadata).
void save_detector(const std::string& path, const LinearDetector& det);
LinearDetector load_detector(const std::string& path);

}  // namespace pathprof
