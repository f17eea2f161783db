#include "pathprof/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pathprof/engine.hpp"
#include "pathprof/errors.hpp"
#include "pathprof/extractor.hpp"
#include "pathprof/reports.hpp"
#include "pathprof/rng.hpp"

namespace pathprof {

using json = nlohmann::json;

SimilarityFeatures featurize(const Network& net, const Eigen::VectorXd& image,
                             const std::vector<ClassProfile>& class_profiles,
                             const ExtractionConfig& cfg, bool use_weight_sets) {
    const int classes = net.num_classes();
    if (classes < 2) {
        throw DomainError("featurize needs at least two classes");
    }
    if (static_cast<int>(class_profiles.size()) != classes) {
        throw DomainError("expected one profile per class (" + std::to_string(classes) + "), got " +
                          std::to_string(class_profiles.size()));
    }
    const ActivationTrace trace = forward_trace(net, image);

    auto rank_similarity = [&](int start_rank, Eigen::VectorXd& values,
                               std::vector<std::uint8_t>& missing) {
        ExtractionConfig rank_cfg = cfg;
        rank_cfg.start_rank = start_rank;
        const EffectivePath path = extract_effective_path(net, trace, rank_cfg);
        const int cls = trace.predicted_rank[static_cast<std::size_t>(start_rank) - 1];
        const ClassProfile& profile = class_profiles[static_cast<std::size_t>(cls)];
        if (profile.empty()) {
            values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(path.layers.size()));
            missing.assign(path.layers.size(), 1);
            return;
        }
        const SimilarityVector sim = use_weight_sets
                                         ? weight_based_similarity_per_layer(path, profile)
                                         : image_class_similarity_per_layer(path, profile);
        values = sim.values;
        missing = sim.empty_layer;
    };

    SimilarityFeatures f;
    rank_similarity(1, f.rank1, f.rank1_missing);
    rank_similarity(2, f.rank2, f.rank2_missing);
    return f;
}

namespace {

double masked(const Eigen::VectorXd& values, const std::vector<std::uint8_t>& missing,
              Eigen::Index i) {
    return missing[static_cast<std::size_t>(i)] ? 0.0 : values[i];
}

double score_features(const Eigen::VectorXd& omega, const Eigen::VectorXd& omega_prime,
                      const SimilarityFeatures& f) {
    double s = 0.0;
    for (Eigen::Index l = 0; l < omega.size(); ++l) {
        s += omega[l] * masked(f.rank1, f.rank1_missing, l);
        s -= omega_prime[l] * masked(f.rank2, f.rank2_missing, l);
    }
    return s;
}

// Youden's J with the detection convention: adversarial iff score < t.
double pick_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<double> candidates = scores;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    candidates.push_back(candidates.back() + 1.0);  // flag everything

    std::int64_t num_adv = 0, num_normal = 0;
    for (int y : labels) {
        (y == 0 ? num_adv : num_normal) += 1;
    }
    double best_j = -2.0, best_t = candidates.front();
    for (double t : candidates) {
        std::int64_t flagged_adv = 0, flagged_normal = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] < t) {
                (labels[i] == 0 ? flagged_adv : flagged_normal) += 1;
            }
        }
        const double tpr = static_cast<double>(flagged_adv) / static_cast<double>(num_adv);
        const double fpr = static_cast<double>(flagged_normal) / static_cast<double>(num_normal);
        const double j = tpr - fpr;
        if (j > best_j) {
            best_j = j;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace

double joint_similarity(const LinearDetector& det, const SimilarityFeatures& f) {
    if (det.omega.size() != f.rank1.size() || det.omega_prime.size() != f.rank2.size()) {
        throw DomainError("feature length does not match detector coefficients");
    }
    return score_features(det.omega, det.omega_prime, f);
}

LinearDetector train_linear_detector(const std::vector<SimilarityFeatures>& features,
                                     const std::vector<int>& labels, const DetectorConfig& cfg) {
    if (features.size() != labels.size() || features.empty()) {
        throw DomainError("detector training needs matching nonempty features/labels");
    }
    bool has_normal = false, has_adv = false;
    for (int y : labels) {
        if (y == 1) {
            has_normal = true;
        } else if (y == 0) {
            has_adv = true;
        } else {
            throw DomainError("labels must be 0 (adversarial) or 1 (normal)");
        }
    }
    if (!has_normal || !has_adv) {
        throw DomainError("detector training needs both classes present");
    }
    const Eigen::Index dim = features[0].rank1.size();
    for (const SimilarityFeatures& f : features) {
        if (f.rank1.size() != dim || f.rank2.size() != dim) {
            throw DomainError("inconsistent feature lengths in training data");
        }
    }

    LinearDetector det;
    det.config = cfg;
    det.omega = Eigen::VectorXd::Zero(dim);
    det.omega_prime = Eigen::VectorXd::Zero(dim);
    det.intercept = 0.0;

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(features.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    const double l1 = cfg.regularization * cfg.l1_ratio;
    const double l2 = cfg.regularization * (1.0 - cfg.l1_ratio);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        seeded_shuffle(order, rng);
        for (std::size_t idx : order) {
            const SimilarityFeatures& f = features[idx];
            const double y = static_cast<double>(labels[idx]);
            const double s = score_features(det.omega, det.omega_prime, f) + det.intercept;
            const double p = 1.0 / (1.0 + std::exp(-s));
            const double ds = p - y;  // d(logloss)/d(score)
            for (Eigen::Index l = 0; l < dim; ++l) {
                const double g1 = ds * masked(f.rank1, f.rank1_missing, l) + l1 + l2 * det.omega[l];
                const double g2 =
                    -ds * masked(f.rank2, f.rank2_missing, l) + l1 + l2 * det.omega_prime[l];
                det.omega[l] = std::max(0.0, det.omega[l] - cfg.learning_rate * g1);
                det.omega_prime[l] = std::max(0.0, det.omega_prime[l] - cfg.learning_rate * g2);
            }
            det.intercept -= cfg.learning_rate * ds;
        }
    }

    if (det.omega.minCoeff() < 0.0 || det.omega_prime.minCoeff() < 0.0) {
        throw InternalInvariantError("detector training produced negative coefficients");
    }

    std::vector<double> scores(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        scores[i] = score_features(det.omega, det.omega_prime, features[i]);
    }
    det.threshold = pick_threshold(scores, labels);
    return det;
}

bool detect_adversarial(const LinearDetector& det, const SimilarityFeatures& f) {
    return joint_similarity(det, f) < det.threshold;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw DomainError("roc_auc needs matching nonempty scores/labels");
    }
    std::int64_t pos = 0, neg = 0;
    for (int y : labels) {
        (y == 1 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) {
        throw DomainError("roc_auc needs both labels present");
    }

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocResult result;
    result.curve.emplace_back(0.0, 0.0);
    double auc = 0.0;
    std::int64_t tp = 0, fp = 0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        // Group equal scores: one ROC step per distinct threshold.
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += labels[order[j]] == 1;
            fp += labels[order[j]] == 0;
            ++j;
        }
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        result.curve.emplace_back(fpr, tpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
        i = j;
    }
    result.auc = auc;
    return result;
}

void export_features_csv(const std::string& path, const std::vector<FeatureRecord>& records,
                         int layer_count) {
    std::vector<std::string> header{"id", "label", "attack", "predicted"};
    for (int l = 1; l <= layer_count; ++l) {
        header.push_back("rank1_" + std::to_string(l));
    }
    for (int l = 1; l <= layer_count; ++l) {
        header.push_back("rank2_" + std::to_string(l));
    }
    for (int l = 1; l <= layer_count; ++l) {
        header.push_back("miss1_" + std::to_string(l));
    }
    for (int l = 1; l <= layer_count; ++l) {
        header.push_back("miss2_" + std::to_string(l));
    }
    std::vector<std::vector<std::string>> rows;
    rows.reserve(records.size());
    for (const FeatureRecord& r : records) {
        if (r.features.layer_count() != layer_count) {
            throw DomainError("feature record '" + r.id + "' has " +
                              std::to_string(r.features.layer_count()) + " layers, expected " +
                              std::to_string(layer_count));
        }
        std::vector<std::string> row{r.id, std::to_string(r.label), r.attack,
                                     std::to_string(r.predicted)};
        for (Eigen::Index l = 0; l < layer_count; ++l) {
            row.push_back(format_g9(r.features.rank1[l]));
        }
        for (Eigen::Index l = 0; l < layer_count; ++l) {
            row.push_back(format_g9(r.features.rank2[l]));
        }
        for (int l = 0; l < layer_count; ++l) {
            row.push_back(std::to_string(static_cast<int>(r.features.rank1_missing[l])));
        }
        for (int l = 0; l < layer_count; ++l) {
            row.push_back(std::to_string(static_cast<int>(r.features.rank2_missing[l])));
        }
        rows.push_back(std::move(row));
    }
    save_report(path, ReportKind::Csv, header, rows);
}

std::vector<FeatureRecord> load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open features CSV", path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("features CSV is empty (missing header)", 0);
    }
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (!s.empty() && s.back() == ',') {
            cells.emplace_back();
        }
        return cells;
    };
    const auto header = split(line);
    if (header.size() < 4 || (header.size() - 4) % 4 != 0) {
        throw FormatError("features CSV header has unexpected column count " +
                              std::to_string(header.size()),
                          0);
    }
    const int layer_count = static_cast<int>((header.size() - 4) / 4);
    std::vector<FeatureRecord> records;
    std::uint64_t offset = static_cast<std::uint64_t>(line.size()) + 1;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw FormatError("features CSV row has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(header.size()),
                              offset);
        }
        FeatureRecord r;
        r.id = cells[0];
        r.label = std::stoi(cells[1]);
        r.attack = cells[2];
        r.predicted = std::stoi(cells[3]);
        r.features.rank1.resize(layer_count);
        r.features.rank2.resize(layer_count);
        r.features.rank1_missing.resize(static_cast<std::size_t>(layer_count));
        r.features.rank2_missing.resize(static_cast<std::size_t>(layer_count));
        std::size_t c = 4;
        for (int l = 0; l < layer_count; ++l) {
            r.features.rank1[l] = std::stod(cells[c++]);
        }
        for (int l = 0; l < layer_count; ++l) {
            r.features.rank2[l] = std::stod(cells[c++]);
        }
        for (int l = 0; l < layer_count; ++l) {
            r.features.rank1_missing[static_cast<std::size_t>(l)] =
                static_cast<std::uint8_t>(std::stoi(cells[c++]));
        }
        for (int l = 0; l < layer_count; ++l) {
            r.features.rank2_missing[static_cast<std::size_t>(l)] =
                static_cast<std::uint8_t>(std::stoi(cells[c++]));
        }
        records.push_back(std::move(r));
        offset += static_cast<std::uint64_t>(line.size()) + 1;
    }
    return records;
}

void save_detector(const std::string& path, const LinearDetector& det) {
    json doc;
    doc["format"] = "pathprof-detector-v1";
    doc["omega"] = std::vector<double>(det.omega.data(), det.omega.data() + det.omega.size());
    doc["omega_prime"] = std::vector<double>(det.omega_prime.data(),
                                             det.omega_prime.data() + det.omega_prime.size());
    doc["threshold"] = det.threshold;
    doc["intercept"] = det.intercept;
    doc["training"] = {{"epochs", det.config.epochs},
                       {"l1_ratio", det.config.l1_ratio},
                       {"regularization", det.config.regularization},
                       {"learning_rate", det.config.learning_rate},
                       {"seed", det.config.seed}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot create detector file", path);
    }
    out << doc.dump(2) << "\n";
}

LinearDetector load_detector(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open detector file", path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw FormatError("detector parse error: " + std::string(e.what()),
                          static_cast<std::uint64_t>(e.byte));
    }
    if (doc.value("format", "") != "pathprof-detector-v1") {
        throw FormatError("detector file has unknown format field", 0);
    }
    LinearDetector det;
    const auto omega = doc.at("omega").get<std::vector<double>>();
    const auto omega_prime = doc.at("omega_prime").get<std::vector<double>>();
    det.omega = Eigen::Map<const Eigen::VectorXd>(omega.data(),
                                                  static_cast<Eigen::Index>(omega.size()));
    det.omega_prime = Eigen::Map<const Eigen::VectorXd>(
        omega_prime.data(), static_cast<Eigen::Index>(omega_prime.size()));
    det.threshold = doc.at("threshold").get<double>();
    det.intercept = doc.at("intercept").get<double>();
    const json& t = doc.at("training");
    det.config.epochs = t.at("epochs").get<int>();
    det.config.l1_ratio = t.at("l1_ratio").get<double>();
    det.config.regularization = t.at("regularization").get<double>();
    det.config.learning_rate = t.at("learning_rate").get<double>();
    det.config.seed = t.at("seed").get<std::uint64_t>();
    return det;
}

}  // namespace pathprof
