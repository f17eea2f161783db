#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pathprof/dataset.hpp"
#include "pathprof/network.hpp"
#include "pathprof/path.hpp"

namespace pathprof {

// Weights are float32 storage; all activation arithmetic runs in float64.
struct LayerActivation {
    Eigen::VectorXd pre;   // post-bias, pre-nonlinearity (non-ReLU layers: == post)
    Eigen::VectorXd post;  // the value fed to the next layer
};

struct ActivationTrace {
    Eigen::VectorXd input;                // the (flattened) network input
    std::vector<LayerActivation> layers;  // one entry per network layer
    Eigen::VectorXd logits;               // final layer output, pre-softmax
    std::vector<int> predicted_rank;      // class indices by descending logit, ties ascending
};

ActivationTrace forward_trace(const Network& net, const Eigen::VectorXd& input);
inline ActivationTrace forward_trace(const Network& net, const Eigen::VectorXf& input) {
    return forward_trace(net, input.cast<double>().eval());
}

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd input_gradient;  // shaped like the (flattened) input
};

// Cross-entropy of softmax(logits) against target_class and its exact input
// gradient. `targeted` is bookkeeping for attack callers; the loss is the same
// cross-entropy either way (attacks choose the step direction).
LossAndGradient loss_and_input_gradient(const Network& net, const Eigen::VectorXd& input,
                                        int target_class, bool targeted = false);

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double l2_decay = 0.0;

    void validate() const;
};

struct TrainResult {
    Network network;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

// Seeded minibatch SGD. Batch order reshuffles every epoch from cfg.seed;
// updates are single-threaded, so results are bit-reproducible per platform.
TrainResult train_sgd(const Network& net, const LabeledDataset& data, const TrainConfig& cfg);

std::vector<int> predict_topk(const Network& net, const Eigen::VectorXd& input, int k);
int predict_class(const Network& net, const Eigen::VectorXd& input);

double accuracy(const Network& net, const LabeledDataset& data, int jobs = 0);

enum class AblationKind {
    KeepPathOnly,        // zero every weight not in the path's W sets
    DropPathFraction,    // zero round(fraction * |W|) seeded-random path weights
    DropNonPathMatched,  // zero the same count drawn from weights outside the path
};

struct AblationMode {
    AblationKind kind = AblationKind::DropPathFraction;
    double fraction = 0.0;
    std::uint64_t seed = 0;
};

// Forward pass with selected weights zeroed; returns the argmax class.
int ablate_forward(const Network& net, const Eigen::VectorXd& input, const EffectivePath& path,
                   const AblationMode& mode);

// Softmax probabilities of the final logits.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace pathprof
