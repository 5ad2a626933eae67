#pragma once

#include "npc/dataset.hpp"
#include "npc/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace npc {

/// Per-neuron activation range seen on training data, per coverage layer.
struct ActivationRanges {
    std::vector<std::vector<float>> low;
    std::vector<std::vector<float>> high;

    std::size_t layer_count() const noexcept { return low.size(); }
};

ActivationRanges profile_ranges(const Model& m, const LabeledDataset& train);
ActivationRanges profile_ranges(const Model& m, std::span<const Tensor> inputs);

struct BaselineResult {
    std::string criterion;
    std::size_t hit = 0;
    std::size_t total = 0;
    double ratio = 0.0;
    std::size_t degenerate = 0;  // neurons with low == high
};

/// Fraction of neurons whose activation exceeds threshold for at least one input.
BaselineResult nc(const Model& m, std::span<const Tensor> suite, double threshold);

/// Fraction of (neuron, section) pairs hit, with [low, high] cut into k sections.
BaselineResult kmnc(const Model& m, std::span<const Tensor> suite, const ActivationRanges& ranges,
                    std::size_t k = 1000);

/// Fraction of corner regions hit: below low and above high per neuron. With
/// sections > 1 each corner is cut into sections of width (high - low) / sections,
/// the farthest one open-ended.
BaselineResult nbc(const Model& m, std::span<const Tensor> suite, const ActivationRanges& ranges,
                   std::size_t sections = 1);

/// Section of v in [low, high] cut into k parts; v == high lands in k - 1.
std::size_t kmnc_section(float v, float low, float high, std::size_t k);

std::string baseline_report_json(const BaselineResult& r);

}  // namespace npc
