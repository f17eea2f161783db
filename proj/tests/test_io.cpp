#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pathprof/errors.hpp"
#include "pathprof/idx.hpp"
#include "pathprof/model_io.hpp"
#include "pathprof/reports.hpp"
#include "pathprof/synth.hpp"
#include "test_util.hpp"

using namespace pathprof;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("pathprof_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("idx round-trips a hand-crafted two-image fixture") {
    TempDir tmp;
    LabeledDataset data;
    data.image_shape = {1, 2, 3};
    data.num_classes = 10;
    Eigen::VectorXf a(6), b(6);
    a << 0.0f, 1.0f, 127.0f / 255.0f, 5.0f / 255.0f, 0.5f, 34.0f / 255.0f;
    b << 1.0f, 0.0f, 0.0f, 200.0f / 255.0f, 0.0f, 1.0f;
    data.images = {a, b};
    data.labels = {3, 7};
    save_idx(data, tmp.file("img"), tmp.file("lab"));
    const LabeledDataset back = load_idx(tmp.file("img"), tmp.file("lab"), 10);
    REQUIRE(back.size() == 2);
    CHECK(back.labels == std::vector<int>{3, 7});
    // 0.5 quantizes to round(127.5) = 128.
    CHECK(back.images[0][4] == 128.0f / 255.0f);
    CHECK(back.images[0][0] == 0.0f);
    CHECK(back.images[0][1] == 1.0f);
    CHECK(back.images[0][2] == a[2]);
    CHECK(back.images[1] == b);
}

TEST_CASE("idx rejects swapped and malformed files") {
    TempDir tmp;
    const LabeledDataset data = make_synthetic_digits(4, 1, "t");
    save_idx(data, tmp.file("img"), tmp.file("lab"));
    // Labels file handed as images: magic 0x801 != 0x803.
    CHECK_THROWS_AS(load_idx(tmp.file("lab"), tmp.file("img")), FormatError);

    // Image file with the labels magic.
    {
        std::ofstream bad(tmp.file("badmagic"), std::ios::binary);
        const unsigned char m[8] = {0, 0, 8, 3, 0, 0, 0, 1};
        bad.write(reinterpret_cast<const char*>(m), 8);
    }
    CHECK_THROWS_AS(load_idx(tmp.file("badmagic"), tmp.file("lab")), FormatError);

    // Truncated payload.
    {
        auto bytes = slurp(tmp.file("img"));
        bytes.resize(bytes.size() - 5);
        std::ofstream t(tmp.file("trunc"), std::ios::binary);
        t.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_idx(tmp.file("trunc"), tmp.file("lab")), FormatError);

    // Count mismatch between images and labels.
    const LabeledDataset fewer = make_synthetic_digits(3, 1, "t");
    save_idx(fewer, tmp.file("img3"), tmp.file("lab3"));
    CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab3")), FormatError);
}

TEST_CASE("synthetic digits are deterministic, balanced, idx-exact") {
    const LabeledDataset a = make_synthetic_digits(40, 77, "train");
    const LabeledDataset b = make_synthetic_digits(40, 77, "train");
    REQUIRE(a.size() == 40);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.images[i] == b.images[i]);
        CHECK(a.labels[i] == b.labels[i]);
    }
    int counts[10] = {0};
    for (int label : a.labels) {
        counts[label]++;
    }
    for (int c = 0; c < 10; ++c) {
        CHECK(counts[c] == 4);
    }
    // Quantized pixels survive the IDX round-trip bit-exactly.
    TempDir tmp;
    save_idx(a, tmp.file("img"), tmp.file("lab"));
    const LabeledDataset back = load_idx(tmp.file("img"), tmp.file("lab"), 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(back.images[i] == a.images[i]);
    }
}

TEST_CASE("model save/load round-trips bit-exactly") {
    TempDir tmp;
    const Network net = make_lenet(1, 28, 28, 10, 99);
    save_model(tmp.file("model"), net);
    const Network back = load_model(tmp.file("model"));
    CHECK(back.fingerprint() == net.fingerprint());
    REQUIRE(back.layers.size() == net.layers.size());
    const auto& c0 = std::get<Conv2DLayer>(net.layers[0]);
    const auto& c1 = std::get<Conv2DLayer>(back.layers[0]);
    CHECK(c0.weights == c1.weights);
    CHECK(c0.bias == c1.bias);
    const auto& d0 = std::get<DenseLayer>(net.layers[7]);
    const auto& d1 = std::get<DenseLayer>(back.layers[7]);
    CHECK(d0.weights == d1.weights);

    // Save-of-load reproduces identical bytes (manifest and blobs).
    save_model(tmp.file("model2"), back);
    for (const auto& entry : fs::directory_iterator(tmp.file("model"))) {
        const auto name = entry.path().filename().string();
        CHECK(slurp(entry.path().string()) == slurp((fs::path(tmp.file("model2")) / name).string()));
    }
}

TEST_CASE("model loader rejects corrupted manifests and blobs") {
    TempDir tmp;
    const Network net = make_mlp({4, 3}, 1);
    save_model(tmp.file("m"), net);
    {
        std::ofstream bad(fs::path(tmp.file("m")) / "model.json", std::ios::trunc);
        bad << "{\"format\": \"other\"}";
    }
    CHECK_THROWS_AS(load_model(tmp.file("m")), FormatError);

    save_model(tmp.file("m2"), net);
    {
        std::ofstream blob(fs::path(tmp.file("m2")) / "layer0_w.bin",
                           std::ios::binary | std::ios::trunc);
        blob << "short";
    }
    CHECK_THROWS_AS(load_model(tmp.file("m2")), FormatError);
}

TEST_CASE("report writer shapes: similarity matrix, roc points, empty roc") {
    TempDir tmp;
    Eigen::MatrixXd m(3, 3);
    m << 1.0, 0.25, 0.5, 0.25, 1.0, 0.75, 0.5, 0.75, 1.0;
    save_similarity_matrix(tmp.file("sim.csv"), m, {0, 1, 2});
    std::ifstream in(tmp.file("sim.csv"));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    REQUIRE(lines.size() == 4);  // header + 3 rows
    CHECK(lines[0] == "class,0,1,2");
    CHECK(lines[1] == "0,1,0.25,0.5");

    // Symmetry is preserved byte-for-byte across the diagonal reflection.
    save_similarity_matrix(tmp.file("simT.csv"), m.transpose(), {0, 1, 2});
    CHECK(slurp(tmp.file("sim.csv")) == slurp(tmp.file("simT.csv")));

    save_roc_points(tmp.file("roc.csv"), {{0.0, 0.0}, {0.5, 1.0}, {1.0, 1.0}});
    std::ifstream roc(tmp.file("roc.csv"));
    std::getline(roc, line);
    CHECK(line == "fpr,tpr");

    save_roc_points(tmp.file("empty.csv"), {});
    const auto empty_bytes = slurp(tmp.file("empty.csv"));
    CHECK(std::string(empty_bytes.begin(), empty_bytes.end()) == "fpr,tpr\n");
}

TEST_CASE("report rows must match the header width") {
    TempDir tmp;
    CHECK_THROWS_AS(
        save_report(tmp.file("bad.csv"), ReportKind::Csv, {"a", "b"}, {{"1", "2", "3"}}),
        DomainError);
}
