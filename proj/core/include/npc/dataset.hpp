#pragma once

#include "npc/bytes.hpp"
#include "npc/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace npc {

/// Uniformly shaped samples with optional class labels.
struct LabeledDataset {
    Shape sample_shape;
    std::vector<Tensor> inputs;
    std::vector<std::uint32_t> labels;  // empty when the dataset is unlabeled

    std::size_t size() const noexcept { return inputs.size(); }
    bool empty() const noexcept { return inputs.empty(); }
    bool has_labels() const noexcept { return !labels.empty(); }

    /// Throws when shapes are non-uniform, label count differs from sample
    /// count, or (if class_count > 0) a label is out of range.
    void validate(std::size_t class_count = 0) const;

    /// Samples at the given indices, in that order.
    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// .npct container: "NPCT", u32 version, u64 count, u32 rank, rank x u32
/// extents, u8 labels-present flag, count x numel f32, then count x u32 labels.
Bytes save_dataset(const LabeledDataset& data);
LabeledDataset load_dataset(std::span<const std::uint8_t> bytes);

LabeledDataset load_dataset_file(const std::string& path);
void save_dataset_file(const LabeledDataset& data, const std::string& path);

struct BlobsConfig {
    std::size_t dims = 2;
    std::size_t classes = 3;
    std::size_t samples_per_class = 200;
    double spread = 0.06;  // per-axis standard deviation
    std::uint64_t seed = 0;
};

/// Seeded Gaussian blobs inside [0, 1]^dims. Centers are drawn in
/// [0.15, 0.85]^dims and kept apart; samples are clipped to [0, 1].
/// Samples are interleaved by class.
LabeledDataset make_blobs(const BlobsConfig& config);

/// Same blob centers as make_blobs(config) with a fresh sample draw.
LabeledDataset make_blobs_split(const BlobsConfig& config, std::uint64_t split);

}  // namespace npc
