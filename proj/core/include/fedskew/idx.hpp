#pragma once

#include <filesystem>

#include "fedskew/dataset.hpp"

namespace fedskew {

/// Reads an IDX image/label file pair (the MNIST container format).
/// Headers are big-endian; images carry magic 0x00000803 with dims
/// [count, rows, cols], labels carry 0x00000801 with [count].
/// Pixel bytes are scaled to [0, 1] by dividing by 255; labels must be 0-9.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

} // namespace fedskew
