#include <doctest.h>

#include <random>

#include "pathprof/engine.hpp"
#include "pathprof/errors.hpp"
#include "test_util.hpp"

using namespace pathprof;
using namespace testutil;

namespace {

Network identity_dense(int n) {
    DenseLayer d;
    d.in_dim = d.out_dim = n;
    d.weights = Eigen::MatrixXf::Identity(n, n);
    d.bias = Eigen::VectorXf::Zero(n);
    Network net;
    net.input_shape = {n};
    net.layers.emplace_back(std::move(d));
    return net;
}

}  // namespace

TEST_CASE("forward_trace identity dense") {
    const Network net = identity_dense(3);
    Eigen::VectorXd x(3);
    x << 1, 2, 3;
    const ActivationTrace t = forward_trace(net, x);
    CHECK(t.logits[0] == 1.0);
    CHECK(t.logits[1] == 2.0);
    CHECK(t.logits[2] == 3.0);
    CHECK(t.predicted_rank == std::vector<int>{2, 1, 0});
}

TEST_CASE("forward_trace zero weights, bias only") {
    DenseLayer d;
    d.in_dim = 4;
    d.out_dim = 2;
    d.weights = Eigen::MatrixXf::Zero(2, 4);
    d.bias = Eigen::VectorXf(2);
    d.bias << 0.5f, -0.5f;
    Network net;
    net.input_shape = {4};
    net.layers.emplace_back(std::move(d));

    std::mt19937_64 rng(3);
    const Eigen::VectorXd x = random_input(net, rng);
    const ActivationTrace t = forward_trace(net, x);
    CHECK(t.logits[0] == 0.5);
    CHECK(t.logits[1] == -0.5);
    CHECK(t.predicted_rank == std::vector<int>{0, 1});
}

TEST_CASE("forward_trace two-layer hand computation") {
    // Dense(2->3) + ReLU + Dense(3->2) with hand-checked integer weights.
    DenseLayer d1;
    d1.in_dim = 2;
    d1.out_dim = 3;
    d1.weights = Eigen::MatrixXf(3, 2);
    d1.weights << 1, -1, 2, 0, 0, 1;
    d1.bias = Eigen::VectorXf(3);
    d1.bias << 0, 1, -1;
    DenseLayer d2;
    d2.in_dim = 3;
    d2.out_dim = 2;
    d2.weights = Eigen::MatrixXf(2, 3);
    d2.weights << 1, 1, 0, 0, 2, -1;
    d2.bias = Eigen::VectorXf(2);
    d2.bias << 0.5f, 0;
    Network net;
    net.input_shape = {2};
    net.layers.emplace_back(std::move(d1));
    net.layers.emplace_back(ReLULayer{});
    net.layers.emplace_back(std::move(d2));

    Eigen::VectorXd x(2);
    x << 1, 2;
    const ActivationTrace t = forward_trace(net, x);
    // Layer 0 pre: [1*1-1*2+0, 2*1+0*2+1, 0*1+1*2-1] = [-1, 3, 1]
    CHECK(t.layers[0].pre[0] == -1.0);
    CHECK(t.layers[0].pre[1] == 3.0);
    CHECK(t.layers[0].pre[2] == 1.0);
    // ReLU: [0, 3, 1]; logits: [0+3+0+0.5, 0+6-1+0] = [3.5, 5]
    CHECK(t.logits[0] == 3.5);
    CHECK(t.logits[1] == 5.0);
    CHECK(t.predicted_rank == std::vector<int>{1, 0});
}

TEST_CASE("forward_trace shape mismatch and non-finite errors") {
    const Network net = identity_dense(3);
    Eigen::VectorXd bad(2);
    bad << 1, 2;
    CHECK_THROWS_AS(forward_trace(net, bad), DomainError);

    Network huge = identity_dense(2);
    std::get<DenseLayer>(huge.layers[0]).weights *= 1e30f;
    // Repeated squaring through layers would overflow; force it with an input.
    Eigen::VectorXd x(2);
    x << 1e300, 1e300;
    CHECK_THROWS_AS(forward_trace(huge, x), NumericError);
}

TEST_CASE("relu trace consistency and residual exactness") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const Network net = random_small_net(rng);
        const Eigen::VectorXd x = random_input(net, rng);
        const ActivationTrace t = forward_trace(net, x);
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (std::holds_alternative<ReLULayer>(net.layers[i])) {
                for (Eigen::Index j = 0; j < t.layers[i].pre.size(); ++j) {
                    CHECK(t.layers[i].post[j] == std::max(t.layers[i].pre[j], 0.0));
                }
            } else if (const auto* r = std::get_if<ResidualAddLayer>(&net.layers[i])) {
                const Eigen::VectorXd& own_in = t.layers[i - 1].post;
                const Eigen::VectorXd& src =
                    t.layers[static_cast<std::size_t>(r->source_layer_index)].post;
                for (Eigen::Index j = 0; j < own_in.size(); ++j) {
                    CHECK(t.layers[i].post[j] == own_in[j] + src[j]);
                }
            }
        }
    }
}

TEST_CASE("loss on a single-class net is exactly zero") {
    const Network net = identity_dense(1);
    Eigen::VectorXd x(1);
    x << 3.7;
    const LossAndGradient lg = loss_and_input_gradient(net, x, 0);
    CHECK(lg.loss == 0.0);
    CHECK(lg.input_gradient[0] == 0.0);
}

TEST_CASE("softmax shift invariance of loss and input gradient") {
    std::mt19937_64 rng(23);
    Network net;
    net.input_shape = {4};
    net.layers.emplace_back(random_dense(4, 5, rng));
    net.layers.emplace_back(ReLULayer{});
    net.layers.emplace_back(random_dense(5, 3, rng));
    // Zero bias plus a dyadic constant keeps the logit shift exactly uniform.
    std::get<DenseLayer>(net.layers[2]).bias.setZero();
    Network shifted = net;
    std::get<DenseLayer>(shifted.layers[2]).bias.array() += 8.0f;

    const Eigen::VectorXd x = random_input(net, rng);
    const LossAndGradient a = loss_and_input_gradient(net, x, 1);
    const LossAndGradient b = loss_and_input_gradient(shifted, x, 1);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-9));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        CHECK(a.input_gradient[i] == doctest::Approx(b.input_gradient[i]).epsilon(1e-9));
    }
}

TEST_CASE("input gradient matches central finite differences") {
    std::mt19937_64 rng(31);
    int done = 0;
    while (done < 12) {
        const Network net = random_small_net(rng);
        Eigen::VectorXd x = random_input(net, rng);
        if (!smooth_at(net, x)) {
            continue;
        }
        const int target = static_cast<int>(bounded_rand(rng, net.num_classes()));
        const LossAndGradient lg = loss_and_input_gradient(net, x, target);
        const Eigen::VectorXd fd = fd_input_gradient(net, x, target);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            CHECK(rel_err(lg.input_gradient[i], fd[i]) < 1e-3);
        }
        ++done;
    }
}

TEST_CASE("loss_and_input_gradient rejects bad class") {
    const Network net = identity_dense(3);
    Eigen::VectorXd x(3);
    x << 1, 2, 3;
    CHECK_THROWS_AS(loss_and_input_gradient(net, x, 3), DomainError);
    CHECK_THROWS_AS(loss_and_input_gradient(net, x, -1), DomainError);
}

TEST_CASE("predict_topk ordering, ties, permutation") {
    DenseLayer d;
    d.in_dim = 1;
    d.out_dim = 3;
    d.weights = Eigen::MatrixXf::Zero(3, 1);
    d.bias = Eigen::VectorXf(3);
    d.bias << 0.1f, 0.9f, 0.5f;
    Network net;
    net.input_shape = {1};
    net.layers.emplace_back(std::move(d));
    Eigen::VectorXd x(1);
    x << 0;
    CHECK(predict_topk(net, x, 2) == std::vector<int>{1, 2});
    CHECK_THROWS_AS(predict_topk(net, x, 0), DomainError);
    CHECK_THROWS_AS(predict_topk(net, x, 4), DomainError);

    // Tied logits break ties by ascending class index.
    DenseLayer tied;
    tied.in_dim = 1;
    tied.out_dim = 2;
    tied.weights = Eigen::MatrixXf::Zero(2, 1);
    tied.bias = Eigen::VectorXf(2);
    tied.bias << 1.0f, 1.0f;
    Network tnet;
    tnet.input_shape = {1};
    tnet.layers.emplace_back(std::move(tied));
    CHECK(predict_topk(tnet, x, 2) == std::vector<int>{0, 1});

    // k = num_classes is a permutation for random nets.
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Network rnet = random_small_net(rng);
        const auto full = predict_topk(rnet, random_input(rnet, rng), rnet.num_classes());
        std::vector<int> sorted = full;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < rnet.num_classes(); ++i) {
            CHECK(sorted[static_cast<std::size_t>(i)] == i);
        }
    }
}

TEST_CASE("train_sgd zero learning rate is a no-op") {
    std::mt19937_64 rng(41);
    const Network net = make_mlp({4, 6, 3}, 9);
    LabeledDataset data;
    data.image_shape = {4};
    data.num_classes = 3;
    for (int i = 0; i < 10; ++i) {
        Eigen::VectorXf img(4);
        for (int p = 0; p < 4; ++p) {
            img[p] = static_cast<float>(uniform_unit(rng));
        }
        data.images.push_back(img);
        data.labels.push_back(static_cast<int>(bounded_rand(rng, 3)));
    }
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 1;
    const TrainResult result = train_sgd(net, data, cfg);
    const auto& w0 = std::get<DenseLayer>(net.layers[0]).weights;
    const auto& w1 = std::get<DenseLayer>(result.network.layers[0]).weights;
    CHECK(w0 == w1);
}

TEST_CASE("train_sgd rejects empty dataset, learns separable blobs") {
    const Network net = make_mlp({2, 8, 2}, 77);
    LabeledDataset empty;
    empty.image_shape = {2};
    empty.num_classes = 2;
    TrainConfig cfg;
    CHECK_THROWS_AS(train_sgd(net, empty, cfg), DomainError);

    // Two linearly separable blobs.
    std::mt19937_64 rng(7);
    LabeledDataset blobs;
    blobs.image_shape = {2};
    blobs.num_classes = 2;
    for (int i = 0; i < 120; ++i) {
        const int label = i % 2;
        Eigen::VectorXf p(2);
        const double cx = label == 0 ? 0.25 : 0.75;
        p[0] = static_cast<float>(cx + uniform_real(rng, -0.12, 0.12));
        p[1] = static_cast<float>(0.5 + uniform_real(rng, -0.2, 0.2));
        blobs.images.push_back(p);
        blobs.labels.push_back(label);
    }
    cfg.learning_rate = 0.5;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.seed = 3;
    const TrainResult result = train_sgd(net, blobs, cfg);
    CHECK(accuracy(result.network, blobs, 1) >= 0.99);
    CHECK(result.epoch_loss.size() == 50);
    // Reproducibility: identical run gives bit-identical weights.
    const TrainResult again = train_sgd(net, blobs, cfg);
    CHECK(std::get<DenseLayer>(result.network.layers[0]).weights ==
          std::get<DenseLayer>(again.network.layers[0]).weights);
    CHECK(std::get<DenseLayer>(result.network.layers[2]).weights ==
          std::get<DenseLayer>(again.network.layers[2]).weights);
}

TEST_CASE("forward_trace is pure (repeated calls identical)") {
    std::mt19937_64 rng(59);
    const Network net = random_small_net(rng);
    const Eigen::VectorXd x = random_input(net, rng);
    const ActivationTrace a = forward_trace(net, x);
    const ActivationTrace b = forward_trace(net, x);
    CHECK(a.logits == b.logits);
    CHECK(a.predicted_rank == b.predicted_rank);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].post == b.layers[i].post);
    }
}
