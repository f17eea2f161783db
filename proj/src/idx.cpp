#include "pathprof/idx.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "pathprof/errors.hpp"

namespace pathprof {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file", path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failed", path);
    }
    return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t pos,
                        const std::string& what) {
    if (pos + 4 > bytes.size()) {
        throw FormatError("IDX: truncated while reading " + what, pos);
    }
    return (static_cast<std::uint32_t>(bytes[pos]) << 24) |
           (static_cast<std::uint32_t>(bytes[pos + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[pos + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[pos + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char buf[4] = {static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
    out.write(buf, 4);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int num_classes, const std::string& split) {
    const auto image_bytes = read_all(images_path);
    const std::uint32_t image_magic = read_be32(image_bytes, 0, "image magic");
    if (image_magic != kImagesMagic) {
        throw FormatError("IDX: bad image magic in " + images_path, 0);
    }
    const std::uint32_t n = read_be32(image_bytes, 4, "image count");
    const std::uint32_t rows = read_be32(image_bytes, 8, "row count");
    const std::uint32_t cols = read_be32(image_bytes, 12, "column count");
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (image_bytes.size() != 16 + static_cast<std::size_t>(n) * pixels) {
        throw FormatError("IDX: image payload size mismatch in " + images_path,
                          image_bytes.size());
    }

    const auto label_bytes = read_all(labels_path);
    const std::uint32_t label_magic = read_be32(label_bytes, 0, "label magic");
    if (label_magic != kLabelsMagic) {
        throw FormatError("IDX: bad label magic in " + labels_path, 0);
    }
    const std::uint32_t label_n = read_be32(label_bytes, 4, "label count");
    if (label_bytes.size() != 8 + static_cast<std::size_t>(label_n)) {
        throw FormatError("IDX: label payload size mismatch in " + labels_path,
                          label_bytes.size());
    }
    if (label_n != n) {
        throw FormatError("IDX: image count " + std::to_string(n) + " does not match label count " +
                              std::to_string(label_n),
                          4);
    }

    LabeledDataset data;
    data.image_shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
    data.split = split;
    data.images.reserve(n);
    data.labels.reserve(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        Eigen::VectorXf img(static_cast<Eigen::Index>(pixels));
        const std::uint8_t* src = image_bytes.data() + 16 + static_cast<std::size_t>(i) * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            img[static_cast<Eigen::Index>(p)] = static_cast<float>(src[p]) / 255.0f;
        }
        data.images.push_back(std::move(img));
        const int label = label_bytes[8 + i];
        max_label = std::max(max_label, label);
        data.labels.push_back(label);
    }
    data.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    data.validate();
    return data;
}

void save_idx(const LabeledDataset& data, const std::string& images_path,
              const std::string& labels_path) {
    data.validate();
    if (data.image_shape.size() != 3 || data.image_shape[0] != 1) {
        throw DomainError("save_idx expects single-channel (1,rows,cols) images");
    }
    const int rows = data.image_shape[1];
    const int cols = data.image_shape[2];

    std::ofstream images(images_path, std::ios::binary | std::ios::trunc);
    if (!images) {
        throw IoError("cannot create file", images_path);
    }
    write_be32(images, kImagesMagic);
    write_be32(images, static_cast<std::uint32_t>(data.size()));
    write_be32(images, static_cast<std::uint32_t>(rows));
    write_be32(images, static_cast<std::uint32_t>(cols));
    for (const Eigen::VectorXf& img : data.images) {
        for (Eigen::Index p = 0; p < img.size(); ++p) {
            const auto byte =
                static_cast<std::uint8_t>(std::lround(static_cast<double>(img[p]) * 255.0));
            images.put(static_cast<char>(byte));
        }
    }
    if (!images) {
        throw IoError("write failed", images_path);
    }

    std::ofstream labels(labels_path, std::ios::binary | std::ios::trunc);
    if (!labels) {
        throw IoError("cannot create file", labels_path);
    }
    write_be32(labels, kLabelsMagic);
    write_be32(labels, static_cast<std::uint32_t>(data.size()));
    for (int label : data.labels) {
        labels.put(static_cast<char>(label));
    }
    if (!labels) {
        throw IoError("write failed", labels_path);
    }
}

}  // namespace pathprof
