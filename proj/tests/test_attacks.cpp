#include <doctest.h>

#include <random>

#include <filesystem>

#include "pathprof/attacks.hpp"
#include "pathprof/errors.hpp"
#include "pathprof/synth.hpp"
#include "test_util.hpp"

using namespace pathprof;
using namespace testutil;

namespace {

struct AttackFixture {
    Network net;
    LabeledDataset data;

    AttackFixture() {
        net = make_mlp({16, 12, 4}, 5);
        std::mt19937_64 rng(9);
        data.image_shape = {16};
        data.num_classes = 4;
        for (int i = 0; i < 12; ++i) {
            Eigen::VectorXf img(16);
            for (int p = 0; p < 16; ++p) {
                img[p] = static_cast<float>(uniform_unit(rng));
            }
            data.images.push_back(img);
            data.labels.push_back(i % 4);
        }
    }
};

}  // namespace

TEST_CASE("fgsm with zero epsilon returns the image unchanged") {
    AttackFixture f;
    AttackConfig cfg;
    cfg.epsilon = 0.0;
    const Eigen::VectorXf adv = fgsm(f.net, f.data.images[0], f.data.labels[0], cfg);
    CHECK(adv == f.data.images[0]);
}

TEST_CASE("fgsm/bim respect the budget and clip range exactly") {
    AttackFixture f;
    AttackConfig cfg;
    cfg.epsilon = 0.13;
    cfg.step_size = 0.031;
    cfg.iterations = 7;
    for (std::size_t i = 0; i < f.data.images.size(); ++i) {
        for (const char* kind : {"fgsm", "bim"}) {
            const Eigen::VectorXf adv =
                kind[0] == 'f' ? fgsm(f.net, f.data.images[i], f.data.labels[i], cfg)
                               : bim(f.net, f.data.images[i], f.data.labels[i], cfg);
            for (Eigen::Index p = 0; p < adv.size(); ++p) {
                const double delta = std::abs(static_cast<double>(adv[p]) -
                                              static_cast<double>(f.data.images[i][p]));
                CHECK(delta <= cfg.epsilon);
                CHECK(adv[p] >= 0.0f);
                CHECK(adv[p] <= 1.0f);
            }
        }
    }
}

TEST_CASE("bim with one full-size step equals fgsm") {
    AttackFixture f;
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    cfg.step_size = 0.1;
    cfg.iterations = 1;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(bim(f.net, f.data.images[i], f.data.labels[i], cfg) ==
              fgsm(f.net, f.data.images[i], f.data.labels[i], cfg));
    }
}

TEST_CASE("bim rejects step_size above epsilon; fgsm needs a label") {
    AttackFixture f;
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    cfg.step_size = 0.2;
    CHECK_THROWS_AS(bim(f.net, f.data.images[0], f.data.labels[0], cfg), DomainError);
    AttackConfig ok;
    CHECK_THROWS_AS(fgsm(f.net, f.data.images[0], std::nullopt, ok), DomainError);
    AttackConfig bad_target;
    bad_target.targeted = true;  // no target_class
    CHECK_THROWS_AS(fgsm(f.net, f.data.images[0], f.data.labels[0], bad_target), DomainError);
}

TEST_CASE("targeted fgsm step never increases the linearized target loss") {
    AttackFixture f;
    AttackConfig cfg;
    cfg.epsilon = 0.07;
    cfg.targeted = true;
    for (std::size_t i = 0; i < f.data.images.size(); ++i) {
        cfg.target_class = static_cast<int>((f.data.labels[i] + 1) % 4);
        const Eigen::VectorXf adv = fgsm(f.net, f.data.images[i], std::nullopt, cfg);
        const LossAndGradient lg = loss_and_input_gradient(
            f.net, f.data.images[i].cast<double>().eval(), *cfg.target_class, true);
        const Eigen::VectorXd delta = (adv - f.data.images[i]).cast<double>();
        CHECK(lg.input_gradient.dot(delta) <= 0.0);
    }
}

TEST_CASE("attack generators are deterministic under a fixed seed") {
    AttackFixture f;
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    cfg.step_size = 0.02;
    cfg.iterations = 5;
    const AdversarialSet a = attack_dataset(f.net, f.data, "bim", cfg, 0, 2);
    const AdversarialSet b = attack_dataset(f.net, f.data, "bim", cfg, 0, 1);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].image == b.samples[i].image);
        CHECK(a.samples[i].success == b.samples[i].success);
    }
}

TEST_CASE("random_unrecognizable: count, determinism, diagnostics") {
    AttackFixture f;
    const RandomImageResult a = random_unrecognizable(f.net, 5, 42, 0.0);
    CHECK(a.images.size() == 5);
    CHECK(a.attempts == 5);  // floor 0 keeps everything
    const RandomImageResult b = random_unrecognizable(f.net, 5, 42, 0.0);
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        CHECK(a.images[i] == b.images[i]);
    }
    // An unreachable floor exhausts the attempt bound with diagnostics.
    CHECK_THROWS_WITH_AS(random_unrecognizable(f.net, 1, 1, 1.0),
                         doctest::Contains("attempt bound exceeded"), DomainError);
    // Pixel range respected.
    for (const auto& img : a.images) {
        CHECK(img.minCoeff() >= 0.0f);
        CHECK(img.maxCoeff() <= 1.0f);
    }
}

TEST_CASE("adversarial sets round-trip through disk") {
    AttackFixture f;
    AttackConfig cfg;
    cfg.epsilon = 0.09;
    const AdversarialSet set = attack_dataset(f.net, f.data, "fgsm", cfg, 6, 1);
    const auto dir = std::filesystem::temp_directory_path() / "pathprof_advset_test";
    std::filesystem::remove_all(dir);
    save_adversarial_set(dir.string(), set);
    const AdversarialSet back = load_adversarial_set(dir.string());
    REQUIRE(back.samples.size() == set.samples.size());
    CHECK(back.attack == "fgsm");
    CHECK(back.config.epsilon == cfg.epsilon);
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        CHECK(back.samples[i].image == set.samples[i].image);
        CHECK(back.samples[i].source_id == set.samples[i].source_id);
        CHECK(back.samples[i].success == set.samples[i].success);
        CHECK(back.samples[i].original_class == set.samples[i].original_class);
        CHECK(back.samples[i].adversarial_class == set.samples[i].adversarial_class);
    }
    std::filesystem::remove_all(dir);
}
