#include "npc/dataset.hpp"

#include "npc/error.hpp"
#include "npc/rng.hpp"

#include <algorithm>
#include <cmath>

namespace npc {

namespace {
constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::vector<double>> blob_centers(const BlobsConfig& cfg) {
    Rng rng = Rng::stream(cfg.seed, "blobs.centers");
    std::vector<std::vector<double>> centers;
    double min_dist = 0.45;
    std::size_t attempts = 0;
    while (centers.size() < cfg.classes) {
        std::vector<double> c(cfg.dims);
        for (auto& v : c) v = rng.uniform(0.15, 0.85);
        bool ok = true;
        for (const auto& other : centers) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < cfg.dims; ++i) d2 += (c[i] - other[i]) * (c[i] - other[i]);
            if (d2 < min_dist * min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) {
            centers.push_back(std::move(c));
        } else if (++attempts % 500 == 0) {
            min_dist *= 0.9;
        }
    }
    return centers;
}

LabeledDataset draw_blobs(const BlobsConfig& cfg, Rng& rng) {
    if (cfg.dims == 0 || cfg.classes == 0) throw InvalidArgument("blobs need at least one dimension and class");
    const auto centers = blob_centers(cfg);
    LabeledDataset out;
    out.sample_shape = {cfg.dims};
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
        for (std::size_t c = 0; c < cfg.classes; ++c) {
            Tensor x({cfg.dims});
            for (std::size_t i = 0; i < cfg.dims; ++i) {
                x[i] = static_cast<float>(std::clamp(centers[c][i] + cfg.spread * rng.normal(), 0.0, 1.0));
            }
            out.inputs.push_back(std::move(x));
            out.labels.push_back(static_cast<std::uint32_t>(c));
        }
    }
    return out;
}
}  // namespace

void LabeledDataset::validate(std::size_t class_count) const {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].shape() != sample_shape) {
            throw DimensionError("sample " + std::to_string(i) + " has shape " + shape_str(inputs[i].shape()) +
                                 ", dataset declares " + shape_str(sample_shape));
        }
    }
    if (!labels.empty() && labels.size() != inputs.size()) {
        throw InvalidArgument("dataset has " + std::to_string(inputs.size()) + " samples but " +
                              std::to_string(labels.size()) + " labels");
    }
    if (class_count > 0) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= class_count) {
                throw InvalidArgument("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                                      " is not below class count " + std::to_string(class_count));
            }
        }
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.sample_shape = sample_shape;
    for (auto i : indices) {
        out.inputs.push_back(inputs.at(i));
        if (has_labels()) out.labels.push_back(labels.at(i));
    }
    return out;
}

Bytes save_dataset(const LabeledDataset& data) {
    data.validate();
    ByteWriter w;
    w.raw(std::string_view("NPCT"));
    w.u32(kDatasetVersion);
    w.u64(data.size());
    w.u32(static_cast<std::uint32_t>(data.sample_shape.size()));
    for (auto e : data.sample_shape) w.u32(static_cast<std::uint32_t>(e));
    w.u8(data.has_labels() ? 1 : 0);
    for (const auto& x : data.inputs) {
        for (float v : x.data()) w.f32(v);
    }
    for (auto l : data.labels) w.u32(l);
    return std::move(w).take();
}

LabeledDataset load_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.text(4) != "NPCT") throw FormatError("bad magic, expected NPCT", 0);
    const auto version = r.u32();
    if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), 4);
    const auto count = r.u64();
    const auto rank = r.u32();
    LabeledDataset out;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const auto at = r.offset();
        const auto e = r.u32();
        if (e == 0) throw FormatError("zero sample extent", at);
        out.sample_shape.push_back(e);
    }
    const auto flag_at = r.offset();
    const auto flag = r.u8();
    if (flag > 1) throw FormatError("labels flag must be 0 or 1", flag_at);
    const std::size_t numel = shape_numel(out.sample_shape);
    if (count > 0 && (r.remaining() / 4) / count < numel) {
        throw FormatError("truncated sample data", r.offset());
    }
    out.inputs.reserve(count);
    for (std::uint64_t s = 0; s < count; ++s) {
        std::vector<float> v(numel);
        for (auto& f : v) {
            const auto at = r.offset();
            f = r.f32();
            if (!std::isfinite(f)) throw FormatError("non-finite sample value", at);
        }
        out.inputs.emplace_back(out.sample_shape, std::move(v));
    }
    if (flag) {
        out.labels.reserve(count);
        for (std::uint64_t s = 0; s < count; ++s) out.labels.push_back(r.u32());
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after dataset", r.offset());
    return out;
}

LabeledDataset load_dataset_file(const std::string& path) { return load_dataset(read_file(path)); }

void save_dataset_file(const LabeledDataset& data, const std::string& path) {
    write_file(path, save_dataset(data));
}

LabeledDataset make_blobs(const BlobsConfig& config) {
    Rng rng = Rng::stream(config.seed, "blobs.samples");
    return draw_blobs(config, rng);
}

LabeledDataset make_blobs_split(const BlobsConfig& config, std::uint64_t split) {
    Rng rng = Rng::stream(config.seed, "blobs.samples", split + 1);
    return draw_blobs(config, rng);
}

}  // namespace npc
