#pragma once

#include "npc/dataset.hpp"
#include "npc/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace npc {

/// Scalar whose input gradient is requested.
struct Objective {
    enum class Kind { CrossEntropy, TargetLogit };
    Kind kind = Kind::CrossEntropy;
    std::size_t target = 0;

    static Objective cross_entropy(std::size_t label) { return {Kind::CrossEntropy, label}; }
    static Objective logit(std::size_t cls) { return {Kind::TargetLogit, cls}; }
};

struct Gradients {
    std::vector<Tensor> weight;
    std::vector<Tensor> bias;
    Tensor input;
};

/// Back-propagates d(objective)/d(logits) through a cached forward pass.
/// Masked neurons pass no gradient.
Gradients backward(const Model& model, const ForwardPass& pass, const Tensor& logit_grad,
                   const NeuronMask* mask = nullptr, bool want_params = true);

/// Exact gradient of the objective with respect to the input.
Tensor grad_input(const Model& model, const Tensor& x, const Objective& objective,
                  const NeuronMask* mask = nullptr);

/// Mean softmax cross-entropy of one sample, with its gradient w.r.t. logits.
double cross_entropy(const Tensor& logits, std::size_t label, Tensor* logit_grad = nullptr);

struct ArchLayer {
    LayerKind kind = LayerKind::Dense;
    std::size_t units = 0;  // dense outputs or conv kernels
    std::size_t kernel = 3;
    Conv2dGeometry conv{};
    bool relu = true;
    std::optional<PoolGeometry> pool;
};

/// Hidden layers of a network; the trainer appends the dense logit layer.
struct Architecture {
    Shape input_shape;
    std::vector<ArchLayer> hidden;
    std::size_t class_count = 2;

    /// Dense ReLU network, e.g. mlp(2, {16, 16}, 3) for 2-16-16-3.
    static Architecture mlp(std::size_t inputs, std::vector<std::size_t> hidden, std::size_t classes);
};

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Model model;
    double train_accuracy = 0.0;
    double final_loss = 0.0;
};

/// He-uniform initialization from the "train.init" stream of the seed.
Model init_model(const Architecture& arch, std::uint64_t seed);

/// Plain mini-batch SGD on softmax cross-entropy. Deterministic for a seed.
/// Throws when the loss becomes non-finite.
TrainResult train_sgd(const Architecture& arch, const LabeledDataset& data, const TrainConfig& config);

double accuracy(const Model& model, const LabeledDataset& data);

struct PgdConfig {
    double eps = 0.1;
    double step = -1.0;  // negative selects eps / 8
    std::size_t iters = 20;
    std::uint64_t seed = 0;
    /// Valid input box; when set, iterates are also clipped into it.
    std::optional<std::pair<float, float>> input_range = std::make_pair(0.0f, 1.0f);
};

struct PgdResult {
    Tensor adversarial;
    std::size_t predicted = 0;
    bool misclassified = false;
};

/// L-infinity PGD on cross-entropy: random start in the eps-ball, signed
/// gradient ascent steps, projection after every step. Stops at the first
/// iterate that is misclassified.
PgdResult pgd_attack(const Model& model, const Tensor& x, std::size_t label, const PgdConfig& config);

}  // namespace npc
