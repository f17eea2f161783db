#include "pathprof/attacks.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pathprof/errors.hpp"
#include "pathprof/parallel.hpp"
#include "pathprof/rng.hpp"

namespace pathprof {

namespace fs = std::filesystem;
using json = nlohmann::json;

void AttackConfig::validate() const {
    if (epsilon < 0.0) {
        throw DomainError("attack epsilon must be nonnegative");
    }
    if (step_size <= 0.0) {
        throw DomainError("attack step_size must be positive");
    }
    if (iterations <= 0) {
        throw DomainError("attack iterations must be positive");
    }
    if (clip_min >= clip_max) {
        throw DomainError("attack clip range is empty");
    }
    if (targeted != target_class.has_value()) {
        throw DomainError("target_class must be present iff targeted");
    }
}

namespace {

// Projects the proposal onto [x - eps, x + eps] n [clip_min, clip_max] per
// coordinate and rounds to float32 without ever leaving the box.
Eigen::VectorXf project_linf_f32(const Eigen::VectorXf& origin, const Eigen::VectorXd& proposal,
                                 double eps, double clip_min, double clip_max) {
    Eigen::VectorXf out(origin.size());
    for (Eigen::Index i = 0; i < origin.size(); ++i) {
        const double x = static_cast<double>(origin[i]);
        const double lo = std::max(x - eps, clip_min);
        const double hi = std::min(x + eps, clip_max);
        double v = std::min(std::max(proposal[i], lo), hi);
        float f = static_cast<float>(v);
        while (static_cast<double>(f) > hi) {
            f = std::nextafterf(f, -std::numeric_limits<float>::infinity());
        }
        while (static_cast<double>(f) < lo) {
            f = std::nextafterf(f, std::numeric_limits<float>::infinity());
        }
        out[i] = f;
    }
    return out;
}

Eigen::VectorXd sign_of(const Eigen::VectorXd& g) {
    Eigen::VectorXd s(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        s[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    }
    return s;
}

int attack_class(std::optional<int> true_class, const AttackConfig& cfg) {
    if (cfg.targeted) {
        return *cfg.target_class;
    }
    if (!true_class.has_value()) {
        throw DomainError("non-targeted attack needs the true class label");
    }
    return *true_class;
}

Eigen::VectorXf gradient_sign_step(const Network& net, const Eigen::VectorXf& origin,
                                   const Eigen::VectorXf& current, std::optional<int> true_class,
                                   const AttackConfig& cfg, double step) {
    const int cls = attack_class(true_class, cfg);
    const LossAndGradient lg =
        loss_and_input_gradient(net, current.cast<double>().eval(), cls, cfg.targeted);
    const double direction = cfg.targeted ? -1.0 : 1.0;
    const Eigen::VectorXd proposal =
        current.cast<double>() + (direction * step) * sign_of(lg.input_gradient);
    return project_linf_f32(origin, proposal, cfg.epsilon, cfg.clip_min, cfg.clip_max);
}

void check_budget(const Eigen::VectorXf& origin, const Eigen::VectorXf& x, double eps) {
    const double linf = (x.cast<double>() - origin.cast<double>()).cwiseAbs().maxCoeff();
    if (linf > eps) {
        throw InternalInvariantError("attack exceeded its L-infinity budget");
    }
}

}  // namespace

Eigen::VectorXf fgsm(const Network& net, const Eigen::VectorXf& image,
                     std::optional<int> true_class, const AttackConfig& cfg) {
    cfg.validate();
    Eigen::VectorXf out = gradient_sign_step(net, image, image, true_class, cfg, cfg.epsilon);
    check_budget(image, out, cfg.epsilon);
    return out;
}

Eigen::VectorXf bim(const Network& net, const Eigen::VectorXf& image,
                    std::optional<int> true_class, const AttackConfig& cfg) {
    cfg.validate();
    if (cfg.step_size > cfg.epsilon) {
        throw DomainError("BIM step_size must not exceed epsilon");
    }
    Eigen::VectorXf current = image;
    for (int it = 0; it < cfg.iterations; ++it) {
        current = gradient_sign_step(net, image, current, true_class, cfg, cfg.step_size);
        check_budget(image, current, cfg.epsilon);
    }
    return current;
}

RandomImageResult random_unrecognizable(const Network& net, int count, std::uint64_t seed,
                                        double confidence_floor, double clip_min,
                                        double clip_max) {
    if (count <= 0) {
        throw DomainError("random_unrecognizable count must be positive");
    }
    if (confidence_floor < 0.0 || confidence_floor > 1.0) {
        throw DomainError("confidence_floor must be in [0, 1]");
    }
    const std::int64_t pixels = flat_size(net.input_shape);
    const std::int64_t max_attempts = static_cast<std::int64_t>(1000) * count;
    std::mt19937_64 rng(seed);
    RandomImageResult result;
    while (static_cast<int>(result.images.size()) < count) {
        if (result.attempts >= max_attempts) {
            result.acceptance_rate = static_cast<double>(result.images.size()) /
                                     static_cast<double>(result.attempts);
            throw DomainError("random_unrecognizable: attempt bound exceeded (" +
                              std::to_string(result.images.size()) + "/" + std::to_string(count) +
                              " accepted over " + std::to_string(result.attempts) +
                              " attempts, acceptance rate " +
                              std::to_string(result.acceptance_rate) + ")");
        }
        ++result.attempts;
        Eigen::VectorXf img(pixels);
        for (std::int64_t p = 0; p < pixels; ++p) {
            img[p] = static_cast<float>(uniform_real(rng, clip_min, clip_max));
        }
        if (confidence_floor > 0.0) {
            const ActivationTrace trace = forward_trace(net, img.cast<double>().eval());
            const Eigen::VectorXd probs = softmax(trace.logits);
            if (probs.maxCoeff() < confidence_floor) {
                continue;
            }
        }
        result.images.push_back(std::move(img));
    }
    result.acceptance_rate =
        static_cast<double>(result.images.size()) / static_cast<double>(result.attempts);
    return result;
}

AdversarialSet attack_dataset(const Network& net, const LabeledDataset& data,
                              const std::string& attack, const AttackConfig& cfg, int count,
                              int jobs) {
    cfg.validate();
    data.validate();
    const std::size_t n =
        count > 0 ? std::min<std::size_t>(data.size(), static_cast<std::size_t>(count))
                  : data.size();
    AdversarialSet set;
    set.image_shape = data.image_shape;
    set.attack = attack;
    set.config = cfg;
    set.samples.resize(n);
    parallel_for(static_cast<std::int64_t>(n), jobs, [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        const Eigen::VectorXf& clean = data.images[idx];
        AdversarialSample& sample = set.samples[idx];
        sample.source_id = static_cast<int>(idx);
        sample.attack = attack;
        sample.original_class = predict_class(net, clean.cast<double>().eval());
        if (attack == "fgsm") {
            sample.image = fgsm(net, clean, data.labels[idx], cfg);
        } else if (attack == "bim") {
            sample.image = bim(net, clean, data.labels[idx], cfg);
        } else {
            throw DomainError("unknown attack '" + attack + "' (expected fgsm or bim)");
        }
        sample.adversarial_class = predict_class(net, sample.image.cast<double>().eval());
        sample.success = sample.adversarial_class != sample.original_class;
    });
    return set;
}

void save_adversarial_set(const std::string& dir, const AdversarialSet& set) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "pathprof-advset-v1";
    manifest["image_shape"] = set.image_shape;
    manifest["attack"] = set.attack;
    manifest["config"] = {
        {"epsilon", set.config.epsilon},
        {"step_size", set.config.step_size},
        {"iterations", set.config.iterations},
        {"targeted", set.config.targeted},
        {"target_class", set.config.target_class.has_value() ? json(*set.config.target_class)
                                                             : json(nullptr)},
        {"clip_min", set.config.clip_min},
        {"clip_max", set.config.clip_max},
        {"seed", set.config.seed},
    };
    json samples = json::array();
    for (const AdversarialSample& s : set.samples) {
        samples.push_back({{"source_id", s.source_id},
                           {"attack", s.attack},
                           {"original_class", s.original_class},
                           {"adversarial_class", s.adversarial_class},
                           {"success", s.success}});
    }
    manifest["samples"] = samples;

    std::ofstream meta(fs::path(dir) / "samples.json", std::ios::trunc);
    if (!meta) {
        throw IoError("cannot create manifest", (fs::path(dir) / "samples.json").string());
    }
    meta << manifest.dump(2) << "\n";

    std::ofstream blob(fs::path(dir) / "images.f32", std::ios::binary | std::ios::trunc);
    if (!blob) {
        throw IoError("cannot create blob", (fs::path(dir) / "images.f32").string());
    }
    for (const AdversarialSample& s : set.samples) {
        blob.write(reinterpret_cast<const char*>(s.image.data()),
                   static_cast<std::streamsize>(sizeof(float) * s.image.size()));
    }
    if (!blob) {
        throw IoError("blob write failed", (fs::path(dir) / "images.f32").string());
    }
}

AdversarialSet load_adversarial_set(const std::string& dir) {
    std::ifstream meta(fs::path(dir) / "samples.json");
    if (!meta) {
        throw IoError("cannot open manifest", (fs::path(dir) / "samples.json").string());
    }
    json manifest;
    try {
        meta >> manifest;
    } catch (const json::parse_error& e) {
        throw FormatError("adversarial manifest parse error: " + std::string(e.what()),
                          static_cast<std::uint64_t>(e.byte));
    }
    if (manifest.value("format", "") != "pathprof-advset-v1") {
        throw FormatError("adversarial manifest has unknown format field", 0);
    }
    AdversarialSet set;
    set.image_shape = manifest.at("image_shape").get<Shape>();
    set.attack = manifest.at("attack").get<std::string>();
    const json& cfg = manifest.at("config");
    set.config.epsilon = cfg.at("epsilon").get<double>();
    set.config.step_size = cfg.at("step_size").get<double>();
    set.config.iterations = cfg.at("iterations").get<int>();
    set.config.targeted = cfg.at("targeted").get<bool>();
    if (!cfg.at("target_class").is_null()) {
        set.config.target_class = cfg.at("target_class").get<int>();
    }
    set.config.clip_min = cfg.at("clip_min").get<double>();
    set.config.clip_max = cfg.at("clip_max").get<double>();
    set.config.seed = cfg.at("seed").get<std::uint64_t>();

    const std::int64_t pixels = flat_size(set.image_shape);
    std::ifstream blob(fs::path(dir) / "images.f32", std::ios::binary);
    if (!blob) {
        throw IoError("cannot open blob", (fs::path(dir) / "images.f32").string());
    }
    std::uint64_t offset = 0;
    for (const json& s : manifest.at("samples")) {
        AdversarialSample sample;
        sample.source_id = s.at("source_id").get<int>();
        sample.attack = s.at("attack").get<std::string>();
        sample.original_class = s.at("original_class").get<int>();
        sample.adversarial_class = s.at("adversarial_class").get<int>();
        sample.success = s.at("success").get<bool>();
        sample.image.resize(pixels);
        blob.read(reinterpret_cast<char*>(sample.image.data()),
                  static_cast<std::streamsize>(sizeof(float) * pixels));
        if (!blob) {
            throw FormatError("adversarial image blob truncated", offset);
        }
        offset += sizeof(float) * static_cast<std::uint64_t>(pixels);
        set.samples.push_back(std::move(sample));
    }
    return set;
}

}  // namespace pathprof
