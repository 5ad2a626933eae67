#pragma once

#include "npc/dataset.hpp"
#include "npc/lrp.hpp"
#include "npc/model.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace npc {

/// Critical neurons per coverage layer for one input, as sorted unit indices.
struct CriticalPath {
    std::vector<std::vector<std::uint32_t>> layers;
    double alpha = 0.0;
    std::optional<std::size_t> sample;

    std::size_t neuron_count() const noexcept;
    friend bool operator==(const CriticalPath& a, const CriticalPath& b) { return a.layers == b.layers; }
};

/// Per-layer critical neurons in descending relevance order (ties: lower unit).
///
/// Layer budget is alpha * g when the origin logit g is positive, otherwise
/// alpha times that layer's positive relevance mass. The shortest prefix of
/// positive-relevance neurons whose sum exceeds the budget is kept; if no
/// prefix does, every positive-relevance neuron is kept.
std::vector<std::vector<std::uint32_t>> ranked_critical_neurons(const RelevanceTrace& r, double alpha);

/// ranked_critical_neurons() with each layer sorted by unit index.
CriticalPath extract_cdp(const RelevanceTrace& r, double alpha);

/// Mean over coverage layers of |s_l| / neuron_count(l).
double width(const CriticalPath& p, const Model& m);

/// Mask holding exactly the path's neurons.
NeuronMask path_mask(const CriticalPath& p, const Model& m);

/// Complement of the path over all coverage-layer neurons.
NeuronMask ncdp(const CriticalPath& p, const Model& m);

/// |a ∩ b| / |a ∪ b| over sorted unit lists; two empty sets score 1, one empty 0.
double layer_jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Mean of layer_jaccard over layers.
double path_similarity(const CriticalPath& p, const CriticalPath& q);

/// Relevance and CDP of one input for its predicted class.
struct SampleAnalysis {
    ActivationTrace trace;
    RelevanceTrace relevance;
    CriticalPath path;
};

SampleAnalysis analyze(const Model& m, const Tensor& x, double alpha, const LrpOptions& lrp = {});

enum class MaskTarget { Cdp, Ncdp };

struct InconsistencyResult {
    double rate = 0.0;
    std::size_t changed = 0;
    std::size_t samples = 0;
    double mean_width = 0.0;  // mean CDP width when paths were extracted
};

/// Builds the mask for sample i from its unmasked forward pass.
using MaskBuilder = std::function<NeuronMask(std::size_t index, const ForwardPass& pass)>;

/// Fraction of inputs whose prediction changes under the per-sample mask.
InconsistencyResult inconsistency_rate(const Model& m, std::span<const Tensor> inputs, const MaskBuilder& builder);

/// Masks each sample's own CDP (or NCDP) and reports the inconsistency rate.
InconsistencyResult mask_eval(const Model& m, const LabeledDataset& data, double alpha, MaskTarget target,
                              const LrpOptions& lrp = {});

/// Splits each layer's ranked CDP into five contiguous relevance bands
/// (earlier bands take the remainder) and masks one band at a time.
std::array<double, 5> quintile_mask_eval(const Model& m, const LabeledDataset& data, double alpha,
                                         const LrpOptions& lrp = {});

}  // namespace npc
