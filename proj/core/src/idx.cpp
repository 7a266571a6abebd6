#include "fedskew/idx.hpp"

#include <cstdint>
#include <fstream>
#include <vector>

#include "fedskew/errors.hpp"

namespace fedskew {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_u32_be(std::istream& in, const std::filesystem::path& path) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) {
        throw IoError("truncated IDX header in " + path.string());
    }
    return (static_cast<uint32_t>(bytes[0]) << 24) |
           (static_cast<uint32_t>(bytes[1]) << 16) |
           (static_cast<uint32_t>(bytes[2]) << 8) |
           static_cast<uint32_t>(bytes[3]);
}

std::vector<unsigned char> read_payload(std::istream& in, size_t count,
                                        const std::filesystem::path& path) {
    std::vector<unsigned char> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(in.gcount()) != count) {
        throw IoError("truncated IDX payload in " + path.string());
    }
    return bytes;
}

} // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) {
        throw IoError("cannot open " + images_path.string());
    }
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) {
        throw IoError("cannot open " + labels_path.string());
    }

    uint32_t magic = read_u32_be(images, images_path);
    if (magic != kImagesMagic) {
        throw IoError("bad image magic in " + images_path.string());
    }
    uint32_t image_count = read_u32_be(images, images_path);
    uint32_t rows = read_u32_be(images, images_path);
    uint32_t cols = read_u32_be(images, images_path);

    magic = read_u32_be(labels, labels_path);
    if (magic != kLabelsMagic) {
        throw IoError("bad label magic in " + labels_path.string());
    }
    uint32_t label_count = read_u32_be(labels, labels_path);

    if (image_count != label_count) {
        throw IoError("image count " + std::to_string(image_count) +
                      " does not match label count " + std::to_string(label_count));
    }

    size_t pixels = static_cast<size_t>(image_count) * rows * cols;
    auto image_bytes = read_payload(images, pixels, images_path);
    auto label_bytes = read_payload(labels, label_count, labels_path);

    LabeledDataset data;
    data.num_classes = 10;
    data.feature_dim = static_cast<int>(rows * cols);
    data.features.resize(pixels);
    for (size_t i = 0; i < pixels; ++i) {
        data.features[i] = image_bytes[i] / 255.0;
    }
    data.labels.resize(label_count);
    for (size_t i = 0; i < label_count; ++i) {
        if (label_bytes[i] > 9) {
            throw IoError("label byte " + std::to_string(label_bytes[i]) +
                          " outside 0-9 in " + labels_path.string());
        }
        data.labels[i] = label_bytes[i];
    }
    return data;
}

} // namespace fedskew
