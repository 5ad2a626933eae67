#pragma once

#include "npc/bytes.hpp"
#include "npc/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace npc {

namespace detail {
struct ModelAccess;
}

enum class LayerKind { Dense, Conv2d };

struct PostOp {
    enum class Kind { Relu, MaxPool, Flatten };
    Kind kind = Kind::Relu;
    PoolGeometry pool{};  // MaxPool only

    static PostOp relu() { return {Kind::Relu, {}}; }
    static PostOp maxpool(std::size_t window, std::size_t stride) { return {Kind::MaxPool, {window, stride}}; }
    static PostOp flatten() { return {Kind::Flatten, {}}; }
};

/// One parametric layer and its fused post-ops.
///
/// Dense weights are [out x in] and the layer reads its input flattened.
/// Conv kernels are [K x C x kh x kw]. Flatten is bookkeeping only: neuron
/// accounting always uses the channels-first shape before flattening.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    Tensor weight;
    Tensor bias;
    Conv2dGeometry conv{};
    std::vector<PostOp> post_ops;

    std::size_t units() const { return weight.dim(0); }

    static LayerSpec dense(Tensor weight, Tensor bias, std::vector<PostOp> post_ops = {});
    static LayerSpec conv2d(Tensor kernels, Tensor bias, Conv2dGeometry geometry,
                            std::vector<PostOp> post_ops = {});
};

/// A neuron of a coverage layer: a dense unit or a conv channel.
struct NeuronId {
    std::uint32_t layer = 0;
    std::uint32_t unit = 0;
};

/// Sequential feed-forward classifier.
///
/// Coverage layers are the outputs of every parametric layer except the final
/// (logit) layer. When the input layer is included it becomes coverage layer 0
/// and its neurons are input channels (rank-3 inputs) or input elements.
class Model {
public:
    Model(Shape input_shape, std::vector<LayerSpec> layers, std::size_t class_count);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    std::size_t class_count() const noexcept { return class_count_; }
    std::uint64_t content_hash() const noexcept { return hash_; }

    bool includes_input_layer() const noexcept { return include_input_; }
    /// Copy with the raw input toggled as a coverage layer. Weights and hash unchanged.
    Model with_input_layer(bool include) const;

    std::size_t coverage_layer_count() const noexcept;
    std::size_t neuron_count(std::size_t layer) const;
    std::size_t total_neurons() const noexcept;
    /// Offset of a coverage layer's first neuron in a layers-ascending enumeration.
    std::size_t neuron_offset(std::size_t layer) const;

    /// Output shape of parametric layer i after its fused post-ops (pre-flatten).
    const Shape& layer_output_shape(std::size_t i) const { return out_shapes_.at(i); }
    /// Shape whose neurons form coverage layer l.
    const Shape& coverage_shape(std::size_t layer) const;

private:
    friend Model load_model(std::span<const std::uint8_t> bytes);
    friend struct detail::ModelAccess;

    void rehash();

    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::size_t class_count_;
    std::uint64_t hash_ = 0;
    bool include_input_ = false;
    std::vector<Shape> out_shapes_;
    std::vector<std::size_t> cov_counts_;
    std::vector<std::size_t> cov_offsets_;

    void rebuild_neuron_index();
};

/// Serializes to the .npcm container. Layout: "NPCM", u32 version, u64
/// manifest length, UTF-8 JSON manifest, then a blob of little-endian f32.
Bytes save_model(const Model& model);

/// Parses a .npcm container. The content hash is FNV-1a 64 over the manifest
/// bytes followed by the blob bytes exactly as stored.
Model load_model(std::span<const std::uint8_t> bytes);

Model load_model_file(const std::string& path);
void save_model_file(const Model& model, const std::string& path);

/// Set of coverage-layer neurons whose outputs are forced to zero.
class NeuronMask {
public:
    NeuronMask() = default;
    explicit NeuronMask(const Model& model);

    static NeuronMask all(const Model& model);

    void set(NeuronId id);
    void set(std::uint32_t layer, std::uint32_t unit) { set(NeuronId{layer, unit}); }
    bool contains(std::size_t layer, std::size_t unit) const;
    bool layer_has_any(std::size_t layer) const;
    std::size_t count() const noexcept;
    bool empty() const noexcept { return count() == 0; }
    std::size_t layer_count() const noexcept { return flags_.size(); }

private:
    std::vector<std::vector<std::uint8_t>> flags_;
};

struct ActivationTrace {
    /// Per coverage layer: dense unit values or conv channel spatial means,
    /// taken after fused post-ops and before masking.
    std::vector<std::vector<float>> layers;
    Tensor logits;
    std::size_t predicted_class = 0;
};

/// Intermediate values of one parametric layer, kept for backward passes.
struct LayerCache {
    Tensor input;   // as consumed (previous output after masking)
    Tensor pre;     // linear output including bias
    /// Value entering each post-op, aligned with LayerSpec::post_ops.
    std::vector<Tensor> stage_inputs;
    /// Pool winners for MaxPool stages, empty for the other kinds.
    std::vector<std::vector<std::size_t>> pool_winners;
    Tensor output;  // after post-ops, before masking
};

struct ForwardPass {
    Tensor input;  // after input-layer masking
    std::vector<LayerCache> layers;
    ActivationTrace trace;
};

ActivationTrace forward(const Model& model, const Tensor& x, const NeuronMask* mask = nullptr);
ActivationTrace forward(const Model& model, const Tensor& x, const NeuronMask& mask);
ForwardPass forward_cached(const Model& model, const Tensor& x, const NeuronMask* mask = nullptr);

struct Prediction {
    std::size_t label = 0;
    float logit = 0.0f;
};

Prediction predict(const Model& model, const Tensor& x, const NeuronMask* mask = nullptr);

/// Argmax with ties resolved to the lowest index.
std::size_t argmax(std::span<const float> values);

}  // namespace npc
