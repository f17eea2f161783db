#include "pathprof/model_io.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pathprof/errors.hpp"

namespace pathprof {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kFormat = "pathprof-model-v1";

void write_blob(const fs::path& file, const float* data, std::size_t count) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot create blob", file.string());
    }
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(float)));
    if (!out) {
        throw IoError("blob write failed", file.string());
    }
}

std::vector<float> read_blob(const fs::path& file, std::size_t expected_bytes) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IoError("cannot open blob", file.string());
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected_bytes) {
        throw FormatError("blob " + file.string() + " has " + std::to_string(bytes.size()) +
                              " bytes, manifest says " + std::to_string(expected_bytes),
                          bytes.size());
    }
    std::vector<float> values(bytes.size() / sizeof(float));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

// Row-major on disk: index j * cols + i holds weights(j, i).
std::vector<float> matrix_row_major(const Eigen::MatrixXf& m) {
    std::vector<float> out(static_cast<std::size_t>(m.size()));
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        for (Eigen::Index i = 0; i < m.cols(); ++i) {
            out[static_cast<std::size_t>(j * m.cols() + i)] = m(j, i);
        }
    }
    return out;
}

Eigen::MatrixXf matrix_from_row_major(const std::vector<float>& v, int rows, int cols) {
    Eigen::MatrixXf m(rows, cols);
    for (int j = 0; j < rows; ++j) {
        for (int i = 0; i < cols; ++i) {
            m(j, i) = v[static_cast<std::size_t>(j) * cols + i];
        }
    }
    return m;
}

json tensor_ref(const std::string& file, std::size_t count) {
    return json{{"file", file}, {"bytes", count * sizeof(float)}};
}

}  // namespace

void save_model(const std::string& dir, const Network& net) {
    net.validate();
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = kFormat;
    manifest["input_shape"] = net.input_shape;
    json layers = json::array();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        json entry;
        entry["kind"] = layer_kind_name(net.layers[i]);
        const std::string stem = "layer" + std::to_string(i);
        if (const auto* d = std::get_if<DenseLayer>(&net.layers[i])) {
            entry["in_dim"] = d->in_dim;
            entry["out_dim"] = d->out_dim;
            const auto w = matrix_row_major(d->weights);
            write_blob(fs::path(dir) / (stem + "_w.bin"), w.data(), w.size());
            entry["weights"] = tensor_ref(stem + "_w.bin", w.size());
            write_blob(fs::path(dir) / (stem + "_b.bin"), d->bias.data(),
                       static_cast<std::size_t>(d->bias.size()));
            entry["bias"] = tensor_ref(stem + "_b.bin", static_cast<std::size_t>(d->bias.size()));
        } else if (const auto* c = std::get_if<Conv2DLayer>(&net.layers[i])) {
            entry["in_channels"] = c->in_channels;
            entry["out_channels"] = c->out_channels;
            entry["kernel_h"] = c->kernel_h;
            entry["kernel_w"] = c->kernel_w;
            entry["stride"] = c->stride;
            entry["padding"] = c->padding;
            const auto w = matrix_row_major(c->weights);
            write_blob(fs::path(dir) / (stem + "_w.bin"), w.data(), w.size());
            entry["weights"] = tensor_ref(stem + "_w.bin", w.size());
            write_blob(fs::path(dir) / (stem + "_b.bin"), c->bias.data(),
                       static_cast<std::size_t>(c->bias.size()));
            entry["bias"] = tensor_ref(stem + "_b.bin", static_cast<std::size_t>(c->bias.size()));
        } else if (const auto* p = std::get_if<MaxPool2DLayer>(&net.layers[i])) {
            entry["kernel_h"] = p->kernel_h;
            entry["kernel_w"] = p->kernel_w;
            entry["stride"] = p->stride;
        } else if (const auto* p = std::get_if<AvgPool2DLayer>(&net.layers[i])) {
            entry["kernel_h"] = p->kernel_h;
            entry["kernel_w"] = p->kernel_w;
            entry["stride"] = p->stride;
        } else if (const auto* r = std::get_if<ResidualAddLayer>(&net.layers[i])) {
            entry["source_layer_index"] = r->source_layer_index;
        }
        layers.push_back(entry);
    }
    manifest["layers"] = layers;

    std::ofstream out(fs::path(dir) / "model.json", std::ios::trunc);
    if (!out) {
        throw IoError("cannot create manifest", (fs::path(dir) / "model.json").string());
    }
    out << manifest.dump(2) << "\n";
}

Network load_model(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "model.json";
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot open manifest", manifest_path.string());
    }
    json manifest;
    try {
        in >> manifest;
    } catch (const json::parse_error& e) {
        throw FormatError("model manifest parse error: " + std::string(e.what()),
                          static_cast<std::uint64_t>(e.byte));
    }
    if (manifest.value("format", "") != kFormat) {
        throw FormatError("model manifest has unknown format field", 0);
    }

    Network net;
    net.input_shape = manifest.at("input_shape").get<Shape>();
    auto load_tensor = [&](const json& ref) {
        const std::string file = ref.at("file").get<std::string>();
        const auto bytes = ref.at("bytes").get<std::size_t>();
        return read_blob(fs::path(dir) / file, bytes);
    };
    for (const json& entry : manifest.at("layers")) {
        const std::string kind = entry.at("kind").get<std::string>();
        if (kind == "dense") {
            DenseLayer d;
            d.in_dim = entry.at("in_dim").get<int>();
            d.out_dim = entry.at("out_dim").get<int>();
            d.weights = matrix_from_row_major(load_tensor(entry.at("weights")), d.out_dim, d.in_dim);
            const auto b = load_tensor(entry.at("bias"));
            d.bias = Eigen::Map<const Eigen::VectorXf>(b.data(),
                                                       static_cast<Eigen::Index>(b.size()));
            net.layers.emplace_back(std::move(d));
        } else if (kind == "conv2d") {
            Conv2DLayer c;
            c.in_channels = entry.at("in_channels").get<int>();
            c.out_channels = entry.at("out_channels").get<int>();
            c.kernel_h = entry.at("kernel_h").get<int>();
            c.kernel_w = entry.at("kernel_w").get<int>();
            c.stride = entry.at("stride").get<int>();
            c.padding = entry.at("padding").get<int>();
            c.weights = matrix_from_row_major(load_tensor(entry.at("weights")), c.out_channels,
                                              c.in_channels * c.kernel_h * c.kernel_w);
            const auto b = load_tensor(entry.at("bias"));
            c.bias = Eigen::Map<const Eigen::VectorXf>(b.data(),
                                                       static_cast<Eigen::Index>(b.size()));
            net.layers.emplace_back(std::move(c));
        } else if (kind == "maxpool2d") {
            net.layers.emplace_back(MaxPool2DLayer{entry.at("kernel_h").get<int>(),
                                                   entry.at("kernel_w").get<int>(),
                                                   entry.at("stride").get<int>()});
        } else if (kind == "avgpool2d") {
            net.layers.emplace_back(AvgPool2DLayer{entry.at("kernel_h").get<int>(),
                                                   entry.at("kernel_w").get<int>(),
                                                   entry.at("stride").get<int>()});
        } else if (kind == "relu") {
            net.layers.emplace_back(ReLULayer{});
        } else if (kind == "flatten") {
            net.layers.emplace_back(FlattenLayer{});
        } else if (kind == "residual_add") {
            net.layers.emplace_back(ResidualAddLayer{entry.at("source_layer_index").get<int>()});
        } else {
            throw FormatError("model manifest names unknown layer kind '" + kind + "'", 0);
        }
    }
    net.validate();
    return net;
}

}  // namespace pathprof
