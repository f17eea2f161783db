#include "pathprof/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pathprof/attacks.hpp"
#include "pathprof/detector.hpp"
#include "pathprof/engine.hpp"
#include "pathprof/errors.hpp"
#include "pathprof/extractor.hpp"
#include "pathprof/idx.hpp"
#include "pathprof/model_io.hpp"
#include "pathprof/parallel.hpp"
#include "pathprof/path_algebra.hpp"
#include "pathprof/path_io.hpp"
#include "pathprof/reports.hpp"
#include "pathprof/rng.hpp"

namespace pathprof {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing: defaults <- config file <- explicit flags. The resolved
// object is written as <out_dir>/<subcommand>_manifest.json; rerunning with
// --config <manifest> reproduces identical outputs byte for byte.
// ---------------------------------------------------------------------------

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config", path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw FormatError("config parse error: " + std::string(e.what()),
                          static_cast<std::uint64_t>(e.byte));
    }
    return doc;
}

struct ConfigBuilder {
    CLI::App* app = nullptr;
    json resolved;
    std::string config_path;
    std::vector<std::function<void()>> appliers;

    ConfigBuilder(CLI::App* a, json defaults) : app(a), resolved(std::move(defaults)) {
        app->add_option("--config", config_path, "JSON config file (flags override it)");
    }

    // Registers a flag bound to `key`; explicit command-line values win over
    // config-file values, which win over defaults.
    template <typename T>
    CLI::Option* option(const std::string& flag, const std::string& key, const std::string& help) {
        auto holder = std::make_shared<T>();
        CLI::Option* opt = app->add_option(flag, *holder, help);
        appliers.push_back([this, opt, holder, key]() {
            if (opt->count() > 0) {
                resolved[key] = *holder;
            }
        });
        return opt;
    }

    void flag(const std::string& flag_name, const std::string& key, const std::string& help,
              bool store_value = true) {
        auto holder = std::make_shared<bool>(false);
        CLI::Option* opt = app->add_flag(flag_name, *holder, help);
        appliers.push_back([this, opt, holder, key, store_value]() {
            if (opt->count() > 0) {
                resolved[key] = store_value ? *holder : !*holder;
            }
        });
    }

    json finalize(const std::string& subcommand) {
        if (!config_path.empty()) {
            const json file = load_config_file(config_path);
            for (auto it = file.begin(); it != file.end(); ++it) {
                if (it.key() == "subcommand") {
                    continue;  // replayed manifests carry this marker
                }
                if (!resolved.contains(it.key())) {
                    throw DomainError("config key '" + it.key() + "' is not recognized by '" +
                                      subcommand + "'");
                }
                resolved[it.key()] = it.value();
            }
        }
        for (auto& apply : appliers) {
            apply();
        }
        resolved["subcommand"] = subcommand;
        return resolved;
    }
};

void write_manifest(const json& resolved, const std::string& subcommand) {
    const std::string out_dir = resolved.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / (subcommand + "_manifest.json");
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write manifest", path.string());
    }
    out << resolved.dump(2) << "\n";
}

ExtractionConfig extraction_from(const json& cfg) {
    ExtractionConfig out;
    out.theta = cfg.at("theta").get<double>();
    const int depth = cfg.at("depth").get<int>();
    out.num_layers = depth == 0 ? kAllLayers : depth;
    if (cfg.contains("start_rank")) {
        out.start_rank = cfg.at("start_rank").get<int>();
    }
    return out;
}

LabeledDataset dataset_from(const json& cfg, const char* images_key = "images",
                            const char* labels_key = "labels") {
    LabeledDataset data = load_idx(cfg.at(images_key).get<std::string>(),
                                   cfg.at(labels_key).get<std::string>(), 10);
    const int limit = cfg.value("limit", 0);
    if (limit > 0) {
        data = data.head(static_cast<std::size_t>(limit));
    }
    return data;
}

std::vector<ClassProfile> load_profiles_dir(const std::string& dir, int num_classes) {
    std::vector<ClassProfile> profiles;
    for (int c = 0; c < num_classes; ++c) {
        const fs::path file = fs::path(dir) / ("class_" + std::to_string(c) + ".epath");
        if (!fs::exists(file)) {
            throw IoError("missing class profile", file.string());
        }
        profiles.push_back(read_profile_file(file.string()));
    }
    return profiles;
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces (featurization pools, split, detector train/eval).
// ---------------------------------------------------------------------------

std::vector<FeatureRecord> featurize_pool(const Network& net,
                                          const std::vector<ClassProfile>& profiles,
                                          const LabeledDataset& normals,
                                          const std::vector<AdversarialSet>& adv_sets,
                                          const ExtractionConfig& cfg, bool weight_based,
                                          bool successful_only, int jobs) {
    struct Item {
        std::string id;
        int label;
        std::string attack;
        const Eigen::VectorXf* image;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < normals.size(); ++i) {
        items.push_back({"n" + std::to_string(i), 1, "none", &normals.images[i]});
    }
    std::int64_t filtered = 0;
    for (const AdversarialSet& set : adv_sets) {
        for (const AdversarialSample& s : set.samples) {
            if (successful_only && !s.success) {
                ++filtered;
                continue;
            }
            items.push_back(
                {set.attack + "-" + std::to_string(s.source_id), 0, set.attack, &s.image});
        }
    }
    if (filtered > 0) {
        std::cerr << "featurize: filtered " << filtered
                  << " unsuccessful adversarial samples (prediction unchanged)\n";
    }

    std::vector<FeatureRecord> records(items.size());
    parallel_for(static_cast<std::int64_t>(items.size()), jobs, [&](std::int64_t i) {
        const Item& item = items[static_cast<std::size_t>(i)];
        FeatureRecord r;
        r.id = item.id;
        r.label = item.label;
        r.attack = item.attack;
        const Eigen::VectorXd x = item.image->cast<double>();
        r.predicted = predict_class(net, x);
        r.features = featurize(net, x, profiles, cfg, weight_based);
        records[static_cast<std::size_t>(i)] = std::move(r);
    });
    return records;
}

// Seeded shuffle split: the first `fraction` of the shuffled order trains the
// detector, the rest evaluates it. detect-train and detect-eval re-derive the
// same split from (fraction, seed).
void split_records(std::size_t n, double fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train_idx, std::vector<std::size_t>& eval_idx) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw DomainError("split fraction must be in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    const std::vector<std::size_t> order = shuffled_indices(n, rng);
    const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    eval_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
}

DetectorConfig detector_config_from(const json& cfg) {
    DetectorConfig dc;
    dc.epochs = cfg.at("detector_epochs").get<int>();
    dc.l1_ratio = cfg.at("l1_ratio").get<double>();
    dc.regularization = cfg.at("regularization").get<double>();
    dc.learning_rate = cfg.at("detector_lr").get<double>();
    dc.seed = cfg.at("detector_seed").get<std::uint64_t>();
    return dc;
}

LinearDetector train_on_records(const std::vector<FeatureRecord>& records,
                                const std::vector<std::size_t>& idx, const DetectorConfig& dc) {
    std::vector<SimilarityFeatures> feats;
    std::vector<int> labels;
    for (std::size_t i : idx) {
        feats.push_back(records[i].features);
        labels.push_back(records[i].label);
    }
    return train_linear_detector(feats, labels, dc);
}

RocResult eval_on_records(const LinearDetector& det, const std::vector<FeatureRecord>& records,
                          const std::vector<std::size_t>& idx) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i : idx) {
        scores.push_back(joint_similarity(det, records[i].features));
        labels.push_back(records[i].label);
    }
    return roc_auc(scores, labels);
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

int run_train(const json& cfg) {
    const LabeledDataset data = dataset_from(cfg);
    const std::string arch = cfg.at("arch").get<std::string>();
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    Network net;
    if (arch == "lenet") {
        net = make_lenet(data.image_shape[0], data.image_shape[1], data.image_shape[2],
                         data.num_classes, seed);
    } else if (arch == "mlp") {
        std::vector<int> dims = cfg.at("mlp_dims").get<std::vector<int>>();
        dims.insert(dims.begin(), static_cast<int>(flat_size(data.image_shape)));
        dims.push_back(data.num_classes);
        net = make_mlp(dims, seed);
    } else {
        throw DomainError("unknown arch '" + arch + "' (expected lenet or mlp)");
    }
    TrainConfig tc;
    tc.learning_rate = cfg.at("learning_rate").get<double>();
    tc.epochs = cfg.at("epochs").get<int>();
    tc.batch_size = cfg.at("batch_size").get<int>();
    tc.seed = seed;
    tc.l2_decay = cfg.at("l2_decay").get<double>();
    const TrainResult result = train_sgd(net, data, tc);

    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    save_model((fs::path(out_dir) / "model").string(), result.network);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        rows.push_back({std::to_string(e + 1), format_g9(result.epoch_loss[e])});
    }
    save_report((fs::path(out_dir) / "train_loss.csv").string(), ReportKind::Csv,
                {"epoch", "loss"}, rows);
    std::cout << "trained " << arch << " for " << tc.epochs << " epochs; final loss "
              << format_g9(result.epoch_loss.back()) << "\n";
    return 0;
}

int run_extract(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    const LabeledDataset data = dataset_from(cfg);
    const ExtractionConfig ec = extraction_from(cfg);
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    const fs::path paths_dir = fs::path(out_dir) / "paths";
    fs::create_directories(paths_dir);
    std::vector<EffectivePath> paths(data.size());
    parallel_for(static_cast<std::int64_t>(data.size()), cfg.value("jobs", 0),
                 [&](std::int64_t i) {
                     const auto idx = static_cast<std::size_t>(i);
                     const ActivationTrace trace =
                         forward_trace(net, data.images[idx].cast<double>().eval());
                     paths[idx] = extract_effective_path(net, trace, ec);
                 });
    for (std::size_t i = 0; i < paths.size(); ++i) {
        write_path_file((paths_dir / ("path_" + std::to_string(i) + ".epath")).string(),
                        paths[i]);
    }
    std::cout << "extracted " << paths.size() << " paths to " << paths_dir.string() << "\n";
    return 0;
}

int run_aggregate(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    const LabeledDataset data = dataset_from(cfg);
    const ExtractionConfig ec = extraction_from(cfg);
    const AggregateResult agg = aggregate_class_profiles(net, data, ec, cfg.value("jobs", 0));

    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    const fs::path profiles_dir = fs::path(out_dir) / "profiles";
    fs::create_directories(profiles_dir);
    for (std::size_t c = 0; c < agg.classes.size(); ++c) {
        if (agg.classes[c].empty()) {
            std::cerr << "warning: class " << c << " has no correctly predicted images\n";
        }
        write_profile_file((profiles_dir / ("class_" + std::to_string(c) + ".epath")).string(),
                           agg.classes[c]);
    }
    write_profile_file((profiles_dir / "overall.epath").string(), agg.overall);

    const DensityReport dens = density(agg.overall, net);
    std::vector<std::vector<std::string>> rows;
    for (const LayerDensity& l : dens.layers) {
        rows.push_back({std::to_string(l.layer_index), std::to_string(l.synapses),
                        std::to_string(l.synapse_capacity), format_g9(l.synapse_density),
                        std::to_string(l.weights), std::to_string(l.weight_capacity),
                        format_g9(l.weight_density)});
    }
    rows.push_back({"total", std::to_string(agg.overall.total_synapses()), "",
                    format_g9(dens.synapse_density), std::to_string(agg.overall.total_weights()),
                    "", format_g9(dens.weight_density)});
    save_report((fs::path(out_dir) / "density.csv").string(), ReportKind::Csv,
                {"layer", "synapses", "synapse_capacity", "synapse_density", "weights",
                 "weight_capacity", "weight_density"},
                rows);

    json stats;
    stats["correct"] = agg.correct;
    stats["misclassified"] = agg.misclassified;
    stats["per_class_images"] = agg.per_class_images;
    stats["overall_synapse_density"] = dens.synapse_density;
    stats["overall_weight_density"] = dens.weight_density;
    std::ofstream sf(fs::path(out_dir) / "aggregate_stats.json", std::ios::trunc);
    sf << stats.dump(2) << "\n";
    std::cout << "aggregated " << agg.correct << " correctly predicted images ("
              << agg.misclassified << " excluded); synapse density "
              << format_g9(dens.synapse_density) << "\n";
    return 0;
}

int run_similarity(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    const int classes = net.num_classes();
    const std::vector<ClassProfile> profiles =
        load_profiles_dir(cfg.at("profiles").get<std::string>(), classes);
    Eigen::MatrixXd matrix(classes, classes);
    for (int a = 0; a < classes; ++a) {
        for (int b = a; b < classes; ++b) {
            double j = 0.0;
            try {
                j = jaccard_classwise(profiles[static_cast<std::size_t>(a)],
                                      profiles[static_cast<std::size_t>(b)]);
            } catch (const DomainError&) {
                std::cerr << "warning: classes " << a << "," << b << " both empty; writing 0\n";
            }
            matrix(a, b) = j;
            matrix(b, a) = j;
        }
    }
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    std::vector<int> ids(static_cast<std::size_t>(classes));
    std::iota(ids.begin(), ids.end(), 0);
    save_similarity_matrix((fs::path(out_dir) / "similarity_matrix.csv").string(), matrix, ids);
    double off_sum = 0.0;
    for (int a = 0; a < classes; ++a) {
        for (int b = 0; b < classes; ++b) {
            if (a != b) {
                off_sum += matrix(a, b);
            }
        }
    }
    std::cout << "class-wise similarity matrix written; mean off-diagonal "
              << format_g9(off_sum / (classes * (classes - 1))) << "\n";
    return 0;
}

int run_attack(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    const std::string name = cfg.at("attack").get<std::string>();
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    const fs::path set_dir = fs::path(out_dir) / ("advset_" + name);

    if (name == "random") {
        const RandomImageResult rand = random_unrecognizable(
            net, cfg.at("count").get<int>(), cfg.at("seed").get<std::uint64_t>(),
            cfg.at("confidence_floor").get<double>());
        AdversarialSet set;
        set.image_shape = net.input_shape;
        set.attack = "random";
        set.config.seed = cfg.at("seed").get<std::uint64_t>();
        for (std::size_t i = 0; i < rand.images.size(); ++i) {
            AdversarialSample s;
            s.source_id = static_cast<int>(i);
            s.attack = "random";
            s.adversarial_class = predict_class(net, rand.images[i].cast<double>().eval());
            s.success = true;  // random inputs have no clean prediction to flip
            s.image = rand.images[i];
            set.samples.push_back(std::move(s));
        }
        save_adversarial_set(set_dir.string(), set);
        std::cout << "generated " << set.samples.size() << " random images (acceptance rate "
                  << format_g9(rand.acceptance_rate) << ")\n";
        return 0;
    }

    const LabeledDataset data = dataset_from(cfg);
    AttackConfig ac;
    ac.epsilon = cfg.at("epsilon").get<double>();
    ac.step_size = cfg.at("step_size").get<double>();
    ac.iterations = cfg.at("iterations").get<int>();
    ac.seed = cfg.at("seed").get<std::uint64_t>();
    ac.targeted = cfg.value("targeted", false);
    if (ac.targeted) {
        ac.target_class = cfg.at("target_class").get<int>();
    }
    const AdversarialSet set =
        attack_dataset(net, data, name, ac, cfg.at("count").get<int>(), cfg.value("jobs", 0));
    save_adversarial_set(set_dir.string(), set);
    std::int64_t successes = 0;
    for (const auto& s : set.samples) {
        successes += s.success;
    }
    std::cout << name << ": " << successes << "/" << set.samples.size()
              << " samples flip the prediction\n";
    return 0;
}

int run_featurize(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    const std::vector<ClassProfile> profiles =
        load_profiles_dir(cfg.at("profiles").get<std::string>(), net.num_classes());
    const LabeledDataset normals = dataset_from(cfg);
    std::vector<AdversarialSet> adv_sets;
    for (const auto& dir : cfg.at("adv_sets").get<std::vector<std::string>>()) {
        adv_sets.push_back(load_adversarial_set(dir));
    }
    const ExtractionConfig ec = extraction_from(cfg);
    const auto records =
        featurize_pool(net, profiles, normals, adv_sets, ec, cfg.value("weight_based", false),
                       cfg.value("successful_only", true), cfg.value("jobs", 0));
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    const int layer_count = records.empty() ? static_cast<int>(profiles[0].layers.size())
                                            : records[0].features.layer_count();
    export_features_csv((fs::path(out_dir) / "features.csv").string(), records, layer_count);
    std::cout << "featurized " << records.size() << " images (" << normals.size()
              << " normal)\n";
    return 0;
}

int run_detect_train(const json& cfg) {
    const auto records = load_features_csv(cfg.at("features").get<std::string>());
    std::vector<std::size_t> train_idx, eval_idx;
    split_records(records.size(), cfg.at("split_fraction").get<double>(),
                  cfg.at("split_seed").get<std::uint64_t>(), train_idx, eval_idx);
    const LinearDetector det = train_on_records(records, train_idx, detector_config_from(cfg));
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    save_detector((fs::path(out_dir) / "detector.json").string(), det);
    const RocResult train_roc = eval_on_records(det, records, train_idx);
    std::cout << "detector trained on " << train_idx.size() << " samples; training AUC "
              << format_g9(train_roc.auc) << "\n";
    return 0;
}

int run_detect_eval(const json& cfg) {
    const LinearDetector det = load_detector(cfg.at("detector").get<std::string>());
    const auto records = load_features_csv(cfg.at("features").get<std::string>());
    std::vector<std::size_t> idx;
    if (cfg.value("eval_all", false)) {
        idx = all_indices(records.size());
    } else {
        std::vector<std::size_t> train_idx;
        split_records(records.size(), cfg.at("split_fraction").get<double>(),
                      cfg.at("split_seed").get<std::uint64_t>(), train_idx, idx);
    }
    const RocResult roc = eval_on_records(det, records, idx);

    std::int64_t flagged_normal = 0, flagged_adv = 0, normals = 0, advs = 0;
    for (std::size_t i : idx) {
        const bool adv = detect_adversarial(det, records[i].features);
        if (records[i].label == 1) {
            ++normals;
            flagged_normal += adv;
        } else {
            ++advs;
            flagged_adv += adv;
        }
    }
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    save_roc_points((fs::path(out_dir) / "roc.csv").string(), roc.curve);
    json metrics;
    metrics["auc"] = roc.auc;
    metrics["eval_samples"] = idx.size();
    metrics["normals"] = normals;
    metrics["adversarials"] = advs;
    metrics["threshold"] = det.threshold;
    metrics["tpr_at_threshold"] =
        advs == 0 ? 0.0 : static_cast<double>(flagged_adv) / static_cast<double>(advs);
    metrics["fpr_at_threshold"] =
        normals == 0 ? 0.0 : static_cast<double>(flagged_normal) / static_cast<double>(normals);
    std::ofstream mf(fs::path(out_dir) / "metrics.json", std::ios::trunc);
    mf << metrics.dump(2) << "\n";
    std::cout << "eval AUC " << format_g9(roc.auc) << " over " << idx.size() << " samples\n";
    return 0;
}

int run_ablate(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    const LabeledDataset data = dataset_from(cfg);
    const ExtractionConfig ec = extraction_from(cfg);
    const double fraction = cfg.at("fraction").get<double>();
    const auto seed = cfg.at("seed").get<std::uint64_t>();

    struct Row {
        std::size_t id = 0;
        int label = -1, clean_pred = -1, path_pred = -1, nonpath_pred = -1;
        std::int64_t path_weights = 0;
        bool used = false;
    };
    std::vector<Row> rows(data.size());
    parallel_for(static_cast<std::int64_t>(data.size()), cfg.value("jobs", 0),
                 [&](std::int64_t i) {
                     const auto idx = static_cast<std::size_t>(i);
                     Row& row = rows[idx];
                     row.id = idx;
                     row.label = data.labels[idx];
                     const Eigen::VectorXd x = data.images[idx].cast<double>();
                     const ActivationTrace trace = forward_trace(net, x);
                     row.clean_pred = trace.predicted_rank[0];
                     row.used = row.clean_pred == row.label;
                     if (!row.used) {
                         return;
                     }
                     const EffectivePath path = extract_effective_path(net, trace, ec);
                     row.path_weights = path.total_weights();
                     const AblationMode drop_path{AblationKind::DropPathFraction, fraction,
                                                  seed + idx};
                     const AblationMode drop_other{AblationKind::DropNonPathMatched, fraction,
                                                   seed + idx};
                     row.path_pred = ablate_forward(net, x, path, drop_path);
                     row.nonpath_pred = ablate_forward(net, x, path, drop_other);
                 });

    std::vector<std::vector<std::string>> csv;
    std::int64_t used = 0, path_flips = 0, nonpath_flips = 0;
    for (const Row& r : rows) {
        if (!r.used) {
            continue;
        }
        ++used;
        path_flips += r.path_pred != r.clean_pred;
        nonpath_flips += r.nonpath_pred != r.clean_pred;
        csv.push_back({std::to_string(r.id), std::to_string(r.label),
                       std::to_string(r.clean_pred), std::to_string(r.path_pred),
                       std::to_string(r.nonpath_pred), std::to_string(r.path_weights)});
    }
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    save_report((fs::path(out_dir) / "ablation.csv").string(), ReportKind::Csv,
                {"id", "label", "clean_pred", "path_drop_pred", "nonpath_drop_pred",
                 "path_weight_count"},
                csv);
    const double path_rate =
        used == 0 ? 0.0 : static_cast<double>(path_flips) / static_cast<double>(used);
    const double nonpath_rate =
        used == 0 ? 0.0 : static_cast<double>(nonpath_flips) / static_cast<double>(used);
    json summary;
    summary["images"] = used;
    summary["fraction"] = fraction;
    summary["path_flip_rate"] = path_rate;
    summary["nonpath_flip_rate"] = nonpath_rate;
    std::ofstream sf(fs::path(out_dir) / "ablation_summary.json", std::ios::trunc);
    sf << summary.dump(2) << "\n";
    std::cout << "ablation over " << used << " images: path flip rate " << format_g9(path_rate)
              << ", non-path " << format_g9(nonpath_rate) << "\n";
    return 0;
}

// One full profiles->features->detector->AUC pipeline pass, reused by sweeps.
struct SweepOutcome {
    double auc = 0.0;
    double synapse_density = 0.0;
    double weight_density = 0.0;
    std::int64_t path_size = 0;  // overall profile synapse count
};

SweepOutcome sweep_pipeline(const Network& net, const LabeledDataset& train,
                            const LabeledDataset& normals,
                            const std::vector<AdversarialSet>& adv_sets,
                            const ExtractionConfig& ec, const json& cfg) {
    const int jobs = cfg.value("jobs", 0);
    const AggregateResult agg = aggregate_class_profiles(net, train, ec, jobs);
    const auto records = featurize_pool(net, agg.classes, normals, adv_sets, ec, false, true, jobs);
    std::vector<std::size_t> train_idx, eval_idx;
    split_records(records.size(), cfg.at("split_fraction").get<double>(),
                  cfg.at("split_seed").get<std::uint64_t>(), train_idx, eval_idx);
    const LinearDetector det = train_on_records(records, train_idx, detector_config_from(cfg));
    const DensityReport dens = density(agg.overall, net);
    SweepOutcome out;
    out.auc = eval_on_records(det, records, eval_idx).auc;
    out.synapse_density = dens.synapse_density;
    out.weight_density = dens.weight_density;
    out.path_size = agg.overall.total_synapses();
    return out;
}

int run_sweep_theta(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    json train_cfg = cfg;
    train_cfg["limit"] = cfg.value("train_limit", 0);
    const LabeledDataset train = dataset_from(train_cfg, "train_images", "train_labels");
    const LabeledDataset normals = dataset_from(cfg);
    std::vector<AdversarialSet> adv_sets;
    for (const auto& dir : cfg.at("adv_sets").get<std::vector<std::string>>()) {
        adv_sets.push_back(load_adversarial_set(dir));
    }
    std::vector<std::vector<std::string>> rows;
    for (double theta : cfg.at("values").get<std::vector<double>>()) {
        ExtractionConfig ec = extraction_from(cfg);
        ec.theta = theta;
        const SweepOutcome out = sweep_pipeline(net, train, normals, adv_sets, ec, cfg);
        rows.push_back({format_g9(theta), format_g9(out.synapse_density),
                        format_g9(out.weight_density), std::to_string(out.path_size),
                        format_g9(out.auc)});
        std::cout << "theta " << format_g9(theta) << ": density "
                  << format_g9(out.synapse_density) << ", AUC " << format_g9(out.auc) << "\n";
    }
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    save_report((fs::path(out_dir) / "theta_sweep.csv").string(), ReportKind::Csv,
                {"theta", "synapse_density", "weight_density", "path_size", "auc"}, rows);
    return 0;
}

int run_sweep_depth(const json& cfg) {
    const Network net = load_model(cfg.at("model").get<std::string>());
    json train_cfg = cfg;
    train_cfg["limit"] = cfg.value("train_limit", 0);
    const LabeledDataset train = dataset_from(train_cfg, "train_images", "train_labels");
    const LabeledDataset normals = dataset_from(cfg);
    std::vector<AdversarialSet> adv_sets;
    for (const auto& dir : cfg.at("adv_sets").get<std::vector<std::string>>()) {
        adv_sets.push_back(load_adversarial_set(dir));
    }
    std::vector<std::vector<std::string>> rows;
    for (int depth : cfg.at("values").get<std::vector<int>>()) {
        ExtractionConfig ec = extraction_from(cfg);
        ec.num_layers = depth == 0 ? kAllLayers : depth;
        const SweepOutcome out = sweep_pipeline(net, train, normals, adv_sets, ec, cfg);
        const int resolved = std::min<int>(
            ec.num_layers, static_cast<int>(PathGeometry::of(net).selecting_layers.size()));
        rows.push_back({std::to_string(resolved), format_g9(out.auc)});
        std::cout << "depth " << resolved << ": AUC " << format_g9(out.auc) << "\n";
    }
    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);
    save_report((fs::path(out_dir) / "depth_sweep.csv").string(), ReportKind::Csv,
                {"depth", "auc"}, rows);
    return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"pathprof: effective-path profiling and adversarial input detection"};
    app.require_subcommand(1);

    std::vector<std::unique_ptr<ConfigBuilder>> builders;

    auto add_sub = [&](const std::string& name, const std::string& help, json defaults,
                       int (*runner)(const json&)) -> ConfigBuilder& {
        CLI::App* sub = app.add_subcommand(name, help);
        builders.push_back(std::make_unique<ConfigBuilder>(sub, std::move(defaults)));
        ConfigBuilder* builder = builders.back().get();
        sub->callback([builder, runner, name]() {
            const json resolved = builder->finalize(name);
            write_manifest(resolved, name);
            runner(resolved);
        });
        return *builder;
    };

    {
        json d{{"images", ""},
               {"labels", ""},
               {"out_dir", "out"},
               {"arch", "lenet"},
               {"mlp_dims", json::array({64})},
               {"seed", 1},
               {"epochs", 5},
               {"batch_size", 32},
               {"learning_rate", 0.05},
               {"l2_decay", 0.0},
               {"limit", 0}};
        auto& b = add_sub("train", "fit a model on an IDX dataset", d, run_train);
        b.option<std::string>("--images", "images", "IDX image file");
        b.option<std::string>("--labels", "labels", "IDX label file");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<std::string>("--arch", "arch", "lenet | mlp");
        b.option<std::vector<int>>("--mlp-dims", "mlp_dims", "hidden dims for --arch mlp");
        b.option<std::uint64_t>("--seed", "seed", "training seed");
        b.option<int>("--epochs", "epochs", "training epochs");
        b.option<int>("--batch-size", "batch_size", "minibatch size");
        b.option<double>("--learning-rate", "learning_rate", "SGD step size");
        b.option<double>("--l2-decay", "l2_decay", "L2 weight decay");
        b.option<int>("--limit", "limit", "use only the first N images (0 = all)");
    }
    {
        json d{{"model", ""},  {"images", ""}, {"labels", ""},    {"out_dir", "out"},
               {"theta", 0.5}, {"depth", 0},   {"start_rank", 1}, {"limit", 16},
               {"jobs", 0}};
        auto& b = add_sub("extract", "extract per-image effective paths", d, run_extract);
        b.option<std::string>("--model", "model", "model directory");
        b.option<std::string>("--images", "images", "IDX image file");
        b.option<std::string>("--labels", "labels", "IDX label file");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<double>("--theta", "theta", "contribution ratio in (0,1]");
        b.option<int>("--depth", "depth", "layers back from the last (0 = all)");
        b.option<int>("--start-rank", "start_rank", "1 = predicted class, 2 = rank-2");
        b.option<int>("--limit", "limit", "images to extract (0 = all)");
        b.option<int>("--jobs", "jobs", "parallel workers (0 = machine)");
    }
    {
        json d{{"model", ""},  {"images", ""}, {"labels", ""}, {"out_dir", "out"},
               {"theta", 0.5}, {"depth", 0},   {"limit", 0},   {"jobs", 0}};
        auto& b =
            add_sub("aggregate", "build class and overall profiles + density", d, run_aggregate);
        b.option<std::string>("--model", "model", "model directory");
        b.option<std::string>("--images", "images", "IDX image file");
        b.option<std::string>("--labels", "labels", "IDX label file");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<double>("--theta", "theta", "contribution ratio in (0,1]");
        b.option<int>("--depth", "depth", "layers back from the last (0 = all)");
        b.option<int>("--limit", "limit", "use only the first N images (0 = all)");
        b.option<int>("--jobs", "jobs", "parallel workers (0 = machine)");
    }
    {
        json d{{"model", ""}, {"profiles", ""}, {"out_dir", "out"}};
        auto& b =
            add_sub("similarity", "class-wise Jaccard similarity matrix", d, run_similarity);
        b.option<std::string>("--model", "model", "model directory");
        b.option<std::string>("--profiles", "profiles", "profiles directory");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
    }
    {
        json d{{"model", ""},
               {"images", ""},
               {"labels", ""},
               {"out_dir", "out"},
               {"attack", "fgsm"},
               {"epsilon", 0.2},
               {"step_size", 0.02},
               {"iterations", 10},
               {"count", 500},
               {"seed", 7},
               {"targeted", false},
               {"target_class", 0},
               {"confidence_floor", 0.5},
               {"limit", 0},
               {"jobs", 0}};
        auto& b = add_sub("attack", "generate adversarial / random image sets", d, run_attack);
        b.option<std::string>("--model", "model", "model directory");
        b.option<std::string>("--images", "images", "IDX image file");
        b.option<std::string>("--labels", "labels", "IDX label file");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<std::string>("--attack", "attack", "fgsm | bim | random");
        b.option<double>("--epsilon", "epsilon", "L-infinity budget");
        b.option<double>("--step-size", "step_size", "BIM per-step alpha");
        b.option<int>("--iterations", "iterations", "BIM iterations");
        b.option<int>("--count", "count", "samples to generate");
        b.option<std::uint64_t>("--seed", "seed", "generator seed");
        b.flag("--targeted", "targeted", "targeted attack");
        b.option<int>("--target-class", "target_class", "target class when targeted");
        b.option<double>("--confidence-floor", "confidence_floor",
                         "top-1 confidence filter for random images");
        b.option<int>("--jobs", "jobs", "parallel workers (0 = machine)");
    }
    {
        json d{{"model", ""},
               {"profiles", ""},
               {"images", ""},
               {"labels", ""},
               {"out_dir", "out"},
               {"adv_sets", json::array()},
               {"theta", 0.5},
               {"depth", 0},
               {"limit", 0},
               {"weight_based", false},
               {"successful_only", true},
               {"jobs", 0}};
        auto& b = add_sub("featurize", "per-image similarity feature CSV", d, run_featurize);
        b.option<std::string>("--model", "model", "model directory");
        b.option<std::string>("--profiles", "profiles", "profiles directory");
        b.option<std::string>("--images", "images", "IDX image file (normal pool)");
        b.option<std::string>("--labels", "labels", "IDX label file");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<std::vector<std::string>>("--adv-sets", "adv_sets",
                                           "adversarial set directories")
            ->delimiter(',');
        b.option<double>("--theta", "theta", "contribution ratio in (0,1]");
        b.option<int>("--depth", "depth", "layers back from the last (0 = all)");
        b.option<int>("--limit", "limit", "normal images to use (0 = all)");
        b.flag("--weight-based", "weight_based", "use weight sets instead of synapses");
        b.flag("--include-unsuccessful", "successful_only",
               "keep adversarial samples that did not flip the prediction",
               /*store_value=*/false);
        b.option<int>("--jobs", "jobs", "parallel workers (0 = machine)");
    }
    {
        json d{{"features", ""},
               {"out_dir", "out"},
               {"split_fraction", 0.1},
               {"split_seed", 17},
               {"detector_epochs", 10000},
               {"l1_ratio", 0.5},
               {"regularization", 1e-4},
               {"detector_lr", 0.05},
               {"detector_seed", 11}};
        auto& b = add_sub("detect-train", "fit the linear joint-similarity detector", d,
                          run_detect_train);
        b.option<std::string>("--features", "features", "features CSV");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<double>("--split-fraction", "split_fraction", "train split fraction");
        b.option<std::uint64_t>("--split-seed", "split_seed", "split shuffle seed");
        b.option<int>("--detector-epochs", "detector_epochs", "SGD epochs");
        b.option<double>("--l1-ratio", "l1_ratio", "elastic-net l1 ratio");
        b.option<double>("--regularization", "regularization", "elastic-net strength");
        b.option<double>("--detector-lr", "detector_lr", "SGD learning rate");
        b.option<std::uint64_t>("--detector-seed", "detector_seed", "SGD shuffle seed");
    }
    {
        json d{{"features", ""},      {"detector", ""},   {"out_dir", "out"},
               {"split_fraction", 0.1}, {"split_seed", 17}, {"eval_all", false}};
        auto& b = add_sub("detect-eval", "score features, ROC/AUC report", d, run_detect_eval);
        b.option<std::string>("--features", "features", "features CSV");
        b.option<std::string>("--detector", "detector", "detector JSON file");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<double>("--split-fraction", "split_fraction", "train split fraction");
        b.option<std::uint64_t>("--split-seed", "split_seed", "split shuffle seed");
        b.flag("--eval-all", "eval_all", "evaluate on every row, not the eval split");
    }
    {
        json d{{"model", ""},  {"images", ""}, {"labels", ""},    {"out_dir", "out"},
               {"theta", 0.5}, {"depth", 0},   {"fraction", 0.5}, {"seed", 5},
               {"limit", 200}, {"jobs", 0}};
        auto& b = add_sub("ablate", "path vs non-path weight deactivation study", d, run_ablate);
        b.option<std::string>("--model", "model", "model directory");
        b.option<std::string>("--images", "images", "IDX image file");
        b.option<std::string>("--labels", "labels", "IDX label file");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<double>("--theta", "theta", "contribution ratio in (0,1]");
        b.option<int>("--depth", "depth", "layers back from the last (0 = all)");
        b.option<double>("--fraction", "fraction", "fraction of path weights to drop");
        b.option<std::uint64_t>("--seed", "seed", "drop sampling seed");
        b.option<int>("--limit", "limit", "images to study (0 = all)");
        b.option<int>("--jobs", "jobs", "parallel workers (0 = machine)");
    }
    auto sweep_defaults = [](bool theta_sweep) {
        json d{{"model", ""},
               {"train_images", ""},
               {"train_labels", ""},
               {"images", ""},
               {"labels", ""},
               {"out_dir", "out"},
               {"adv_sets", json::array()},
               {"theta", 0.5},
               {"depth", 0},
               {"limit", 0},
               {"train_limit", 0},
               {"split_fraction", 0.1},
               {"split_seed", 17},
               {"detector_epochs", 10000},
               {"l1_ratio", 0.5},
               {"regularization", 1e-4},
               {"detector_lr", 0.05},
               {"detector_seed", 11},
               {"jobs", 0}};
        d["values"] = theta_sweep ? json::array({0.3, 0.5, 1.0}) : json::array({1, 2, 0});
        return d;
    };
    auto add_sweep_options = [](ConfigBuilder& b, bool theta_sweep) {
        b.option<std::string>("--model", "model", "model directory");
        b.option<std::string>("--train-images", "train_images", "profile-building IDX images");
        b.option<std::string>("--train-labels", "train_labels", "profile-building IDX labels");
        b.option<std::string>("--images", "images", "normal pool IDX images");
        b.option<std::string>("--labels", "labels", "normal pool IDX labels");
        b.option<std::string>("--out-dir", "out_dir", "output directory");
        b.option<std::vector<std::string>>("--adv-sets", "adv_sets",
                                           "adversarial set directories")
            ->delimiter(',');
        if (theta_sweep) {
            b.option<std::vector<double>>("--values", "values", "theta values")->delimiter(',');
            b.option<int>("--depth", "depth", "layers back from the last (0 = all)");
        } else {
            b.option<std::vector<int>>("--values", "values", "depth values (0 = all)")
                ->delimiter(',');
            b.option<double>("--theta", "theta", "contribution ratio in (0,1]");
        }
        b.option<int>("--limit", "limit", "normal images to use (0 = all)");
        b.option<int>("--train-limit", "train_limit", "profile images to use (0 = all)");
        b.option<double>("--split-fraction", "split_fraction", "train split fraction");
        b.option<std::uint64_t>("--split-seed", "split_seed", "split shuffle seed");
        b.option<int>("--detector-epochs", "detector_epochs", "SGD epochs");
        b.option<int>("--jobs", "jobs", "parallel workers (0 = machine)");
    };
    {
        auto& b = add_sub("sweep-theta", "profile/detector pipeline across theta values",
                          sweep_defaults(true), run_sweep_theta);
        add_sweep_options(b, true);
    }
    {
        auto& b = add_sub("sweep-depth", "profile/detector pipeline across extraction depths",
                          sweep_defaults(false), run_sweep_depth);
        add_sweep_options(b, false);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace pathprof
