#pragma once

#include "npc/model.hpp"

#include <optional>
#include <vector>

namespace npc {

enum class LrpRule {
    Epsilon,  // R_j * z_ij / (z_j + eps * sign(z_j))
    ZPlus,    // alpha = 1, beta = 0: positive contributions only
};

struct LrpOptions {
    LrpRule rule = LrpRule::Epsilon;
    double epsilon = 1e-6;
};

/// Per-neuron relevance of every coverage layer for one input and class.
struct RelevanceTrace {
    /// Conv neurons carry the sum over their channel's spatial positions.
    std::vector<std::vector<double>> layers;
    /// Relevance mass dropped between the logit and each coverage layer: bias
    /// shares under the epsilon rule, zero-denominator units under z+.
    std::vector<double> absorbed;
    double origin_logit = 0.0;
    std::size_t target_class = 0;

    double layer_sum(std::size_t layer) const;
    /// |sum_i R_i + absorbed - origin_logit| at a coverage layer.
    double conservation_gap(std::size_t layer) const;
};

/// Backward relevance decomposition starting from R_target = logit(target).
/// Relu passes relevance unchanged; maxpool routes each output's relevance to
/// its winning input. Target defaults to the predicted class.
RelevanceTrace relevance(const Model& model, const Tensor& x, std::optional<std::size_t> target = std::nullopt,
                         const LrpOptions& options = {});

/// As relevance(), reusing an existing cached forward pass.
RelevanceTrace relevance(const Model& model, const ForwardPass& pass, std::optional<std::size_t> target = std::nullopt,
                         const LrpOptions& options = {});

}  // namespace npc
