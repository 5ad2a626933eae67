#include "npc/model.hpp"

#include "npc/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace npc {

using nlohmann::json;

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr std::size_t kHeaderSize = 16;

std::size_t neurons_of(const Shape& s) { return s.size() == 3 ? s[0] : shape_numel(s); }

void zero_masked(Tensor& t, const NeuronMask& mask, std::size_t layer) {
    if (!mask.layer_has_any(layer)) return;
    if (t.rank() == 3) {
        const std::size_t plane = t.dim(1) * t.dim(2);
        for (std::size_t c = 0; c < t.dim(0); ++c) {
            if (!mask.contains(layer, c)) continue;
            std::fill_n(t.data().begin() + static_cast<std::ptrdiff_t>(c * plane), plane, 0.0f);
        }
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (mask.contains(layer, i)) t[i] = 0.0f;
        }
    }
}

std::vector<float> neuron_activations(const Tensor& t) {
    if (t.rank() != 3) return t.values();
    const std::size_t plane = t.dim(1) * t.dim(2);
    std::vector<float> out(t.dim(0));
    for (std::size_t c = 0; c < t.dim(0); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += t[c * plane + i];
        out[c] = static_cast<float>(acc / static_cast<double>(plane));
    }
    return out;
}

const char* post_op_name(PostOp::Kind k) {
    switch (k) {
        case PostOp::Kind::Relu: return "relu";
        case PostOp::Kind::MaxPool: return "maxpool2d";
        case PostOp::Kind::Flatten: return "flatten";
    }
    return "?";
}

}  // namespace

LayerSpec LayerSpec::dense(Tensor weight, Tensor bias, std::vector<PostOp> post_ops) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.weight = std::move(weight);
    s.bias = std::move(bias);
    s.post_ops = std::move(post_ops);
    return s;
}

LayerSpec LayerSpec::conv2d(Tensor kernels, Tensor bias, Conv2dGeometry geometry, std::vector<PostOp> post_ops) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.weight = std::move(kernels);
    s.bias = std::move(bias);
    s.conv = geometry;
    s.post_ops = std::move(post_ops);
    return s;
}

Model::Model(Shape input_shape, std::vector<LayerSpec> layers, std::size_t class_count)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), class_count_(class_count) {
    if (input_shape_.empty() || shape_numel(input_shape_) == 0) throw DimensionError("model input shape is empty");
    if (layers_.empty()) throw DimensionError("model has no layers");
    if (class_count_ == 0) throw DimensionError("class_count must be positive");

    Shape cur = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const std::string where = "layer " + std::to_string(i) + ": ";
        if (l.kind == LayerKind::Dense) {
            if (l.weight.rank() != 2) throw DimensionError(where + "dense weight must be rank 2, got " + shape_str(l.weight.shape()));
            if (l.weight.dim(1) != shape_numel(cur)) {
                throw DimensionError(where + "dense weight " + shape_str(l.weight.shape()) +
                                     " does not accept input " + shape_str(cur));
            }
            cur = {l.weight.dim(0)};
        } else {
            if (l.weight.rank() != 4) throw DimensionError(where + "conv kernels must be rank 4, got " + shape_str(l.weight.shape()));
            if (cur.size() != 3 || cur[0] != l.weight.dim(1)) {
                throw DimensionError(where + "conv kernels " + shape_str(l.weight.shape()) +
                                     " do not accept input " + shape_str(cur));
            }
            cur = {l.weight.dim(0), conv_output_extent(cur[1], l.weight.dim(2), l.conv),
                   conv_output_extent(cur[2], l.weight.dim(3), l.conv)};
        }
        if (l.bias.size() != l.weight.dim(0)) {
            throw DimensionError(where + "bias " + shape_str(l.bias.shape()) + " does not match " +
                                 std::to_string(l.weight.dim(0)) + " units");
        }
        for (const auto& op : l.post_ops) {
            if (op.kind == PostOp::Kind::MaxPool) {
                if (cur.size() != 3) throw DimensionError(where + "maxpool2d needs a C x H x W input");
                cur = {cur[0], pool_output_extent(cur[1], op.pool), pool_output_extent(cur[2], op.pool)};
            }
        }
        out_shapes_.push_back(cur);
    }
    const auto& last = layers_.back();
    if (last.kind != LayerKind::Dense || last.units() != class_count_) {
        throw DimensionError("final layer must be dense with " + std::to_string(class_count_) + " outputs");
    }
    for (const auto& op : last.post_ops) {
        if (op.kind != PostOp::Kind::Flatten) throw DimensionError("final layer must emit raw logits (no relu/maxpool)");
    }
    rebuild_neuron_index();
    rehash();
}

void Model::rehash() {
    const Bytes canonical = save_model(*this);
    hash_ = fnv1a64(std::span(canonical).subspan(kHeaderSize));
}

void Model::rebuild_neuron_index() {
    cov_counts_.clear();
    cov_offsets_.clear();
    if (include_input_) cov_counts_.push_back(neurons_of(input_shape_));
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) cov_counts_.push_back(neurons_of(out_shapes_[i]));
    std::size_t offset = 0;
    for (auto c : cov_counts_) {
        cov_offsets_.push_back(offset);
        offset += c;
    }
}

Model Model::with_input_layer(bool include) const {
    Model copy = *this;
    copy.include_input_ = include;
    copy.rebuild_neuron_index();
    return copy;
}

std::size_t Model::coverage_layer_count() const noexcept { return cov_counts_.size(); }

std::size_t Model::neuron_count(std::size_t layer) const {
    if (layer >= cov_counts_.size()) {
        throw InvalidArgument("coverage layer " + std::to_string(layer) + " out of range (model has " +
                              std::to_string(cov_counts_.size()) + ")");
    }
    return cov_counts_[layer];
}

std::size_t Model::total_neurons() const noexcept {
    return std::accumulate(cov_counts_.begin(), cov_counts_.end(), std::size_t{0});
}

std::size_t Model::neuron_offset(std::size_t layer) const { return cov_offsets_.at(layer); }

const Shape& Model::coverage_shape(std::size_t layer) const {
    if (include_input_) return layer == 0 ? input_shape_ : out_shapes_.at(layer - 1);
    return out_shapes_.at(layer);
}

// ---------------------------------------------------------------------------
// Container

Bytes save_model(const Model& model) {
    json manifest;
    manifest["input_shape"] = model.input_shape();
    manifest["class_count"] = model.class_count();
    json layers = json::array();
    std::size_t offset = 0;
    auto tensor_entry = [&](const std::string& name, const Tensor& t) {
        json e{{"name", name}, {"shape", t.shape()}, {"byte_offset", offset}};
        offset += t.size() * 4;
        return e;
    };
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        const auto& l = model.layers()[i];
        json jl;
        jl["kind"] = l.kind == LayerKind::Dense ? "dense" : "conv2d";
        const std::string prefix = "layers." + std::to_string(i) + ".";
        jl["weight"] = tensor_entry(prefix + "weight", l.weight);
        jl["bias"] = tensor_entry(prefix + "bias", l.bias);
        if (l.kind == LayerKind::Conv2d) {
            jl["stride"] = l.conv.stride;
            jl["padding"] = l.conv.padding;
        }
        json ops = json::array();
        for (const auto& op : l.post_ops) {
            json jo{{"op", post_op_name(op.kind)}};
            if (op.kind == PostOp::Kind::MaxPool) {
                jo["window"] = op.pool.window;
                jo["stride"] = op.pool.stride;
            }
            ops.push_back(jo);
        }
        jl["post_ops"] = ops;
        layers.push_back(jl);
    }
    manifest["layers"] = layers;
    const std::string text = manifest.dump();

    ByteWriter w;
    w.raw(std::string_view("NPCM"));
    w.u32(kModelVersion);
    w.u64(text.size());
    w.raw(text);
    for (const auto& l : model.layers()) {
        for (const Tensor* t : {&l.weight, &l.bias}) {
            for (float v : t->data()) w.f32(v);
        }
    }
    return std::move(w).take();
}

Model load_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.text(4) != "NPCM") throw FormatError("bad magic, expected NPCM", 0);
    const auto version = r.u32();
    if (version != kModelVersion) throw FormatError("unsupported model version " + std::to_string(version), 4);
    const auto manifest_len = r.u64();
    if (manifest_len > r.remaining()) {
        throw FormatError("manifest length " + std::to_string(manifest_len) + " exceeds container", 8);
    }
    const auto manifest_bytes = bytes.subspan(kHeaderSize, manifest_len);
    r.raw(manifest_len);
    const auto blob = bytes.subspan(kHeaderSize + manifest_len);
    const std::size_t blob_start = kHeaderSize + manifest_len;

    json manifest;
    try {
        manifest = json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), kHeaderSize);
    }

    auto read_tensor = [&](const json& entry) {
        const Shape shape = entry.at("shape").get<Shape>();
        const auto off = entry.at("byte_offset").get<std::uint64_t>();
        const std::size_t n = shape_numel(shape);
        if (off > blob.size() || n * 4 > blob.size() - off) {
            throw FormatError("tensor '" + entry.value("name", std::string("?")) + "' extends past end of blob",
                              blob_start + std::min<std::uint64_t>(off, blob.size()));
        }
        std::vector<float> data(n);
        for (std::size_t i = 0; i < n; ++i) {
            data[i] = load_f32_le(blob.data() + off + 4 * i);
            if (!std::isfinite(data[i])) {
                throw FormatError("non-finite value in tensor '" + entry.value("name", std::string("?")) + "'",
                                  blob_start + off + 4 * i);
            }
        }
        return Tensor(shape, std::move(data));
    };

    try {
        std::vector<LayerSpec> layers;
        for (const auto& jl : manifest.at("layers")) {
            const auto kind = jl.at("kind").get<std::string>();
            std::vector<PostOp> ops;
            for (const auto& jo : jl.value("post_ops", json::array())) {
                const auto name = jo.at("op").get<std::string>();
                if (name == "relu") ops.push_back(PostOp::relu());
                else if (name == "maxpool2d") ops.push_back(PostOp::maxpool(jo.at("window"), jo.value("stride", jo.at("window").get<std::size_t>())));
                else if (name == "flatten") ops.push_back(PostOp::flatten());
                else throw FormatError("unsupported post-op '" + name + "'", kHeaderSize);
            }
            if (kind == "dense") {
                layers.push_back(LayerSpec::dense(read_tensor(jl.at("weight")), read_tensor(jl.at("bias")), ops));
            } else if (kind == "conv2d") {
                Conv2dGeometry g{jl.value("stride", std::size_t{1}), jl.value("padding", std::size_t{0})};
                layers.push_back(LayerSpec::conv2d(read_tensor(jl.at("weight")), read_tensor(jl.at("bias")), g, ops));
            } else {
                throw FormatError("unsupported layer kind '" + kind + "'", kHeaderSize);
            }
        }
        Model model(manifest.at("input_shape").get<Shape>(), std::move(layers),
                    manifest.at("class_count").get<std::size_t>());
        model.hash_ = fnv1a64(blob, fnv1a64(manifest_bytes));
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what(), kHeaderSize);
    } catch (const DimensionError& e) {
        throw FormatError(std::string("inconsistent model geometry: ") + e.what(), kHeaderSize);
    }
}

Model load_model_file(const std::string& path) { return load_model(read_file(path)); }

void save_model_file(const Model& model, const std::string& path) { write_file(path, save_model(model)); }

// ---------------------------------------------------------------------------
// Masks

NeuronMask::NeuronMask(const Model& model) {
    flags_.resize(model.coverage_layer_count());
    for (std::size_t l = 0; l < flags_.size(); ++l) flags_[l].assign(model.neuron_count(l), 0);
}

NeuronMask NeuronMask::all(const Model& model) {
    NeuronMask m(model);
    for (auto& layer : m.flags_) std::fill(layer.begin(), layer.end(), 1);
    return m;
}

void NeuronMask::set(NeuronId id) {
    if (id.layer >= flags_.size() || id.unit >= flags_[id.layer].size()) {
        throw InvalidArgument("invalid neuron (layer " + std::to_string(id.layer) + ", unit " +
                              std::to_string(id.unit) + ") for this mask");
    }
    flags_[id.layer][id.unit] = 1;
}

bool NeuronMask::contains(std::size_t layer, std::size_t unit) const {
    return layer < flags_.size() && unit < flags_[layer].size() && flags_[layer][unit] != 0;
}

bool NeuronMask::layer_has_any(std::size_t layer) const {
    return layer < flags_.size() && std::any_of(flags_[layer].begin(), flags_[layer].end(), [](auto f) { return f != 0; });
}

std::size_t NeuronMask::count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : flags_) n += static_cast<std::size_t>(std::count(layer.begin(), layer.end(), 1));
    return n;
}

// ---------------------------------------------------------------------------
// Execution

std::size_t argmax(std::span<const float> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

namespace {

ForwardPass run(const Model& model, const Tensor& x, const NeuronMask* mask, bool keep_cache) {
    if (x.size() != shape_numel(model.input_shape())) {
        throw DimensionError("input " + shape_str(x.shape()) + " does not match model input " +
                             shape_str(model.input_shape()));
    }
    if (mask && mask->layer_count() != 0 && mask->layer_count() != model.coverage_layer_count()) {
        throw InvalidArgument("mask has " + std::to_string(mask->layer_count()) + " layers, model has " +
                              std::to_string(model.coverage_layer_count()));
    }
    const std::size_t cov_shift = model.includes_input_layer() ? 1 : 0;

    ForwardPass pass;
    pass.input = x.shape() == model.input_shape() ? x : x.reshaped(model.input_shape());
    if (cov_shift) {
        pass.trace.layers.push_back(neuron_activations(pass.input));
        if (mask) zero_masked(pass.input, *mask, 0);
    }

    Tensor cur = pass.input;
    const auto& layers = model.layers();
    if (keep_cache) pass.layers.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& spec = layers[i];
        LayerCache cache;
        if (keep_cache) cache.input = cur;
        if (spec.kind == LayerKind::Dense) {
            const auto flat = cur.data();
            const std::size_t out = spec.weight.dim(0), in = spec.weight.dim(1);
            Tensor z({out});
            for (std::size_t o = 0; o < out; ++o) {
                double acc = spec.bias[o];
                for (std::size_t j = 0; j < in; ++j) acc += static_cast<double>(spec.weight[o * in + j]) * flat[j];
                z[o] = static_cast<float>(acc);
            }
            cache.pre = std::move(z);
        } else {
            cache.pre = conv2d(cur, spec.weight, spec.bias, spec.conv);
        }
        Tensor v = cache.pre;
        for (const auto& op : spec.post_ops) {
            if (keep_cache) cache.stage_inputs.push_back(v);
            std::vector<std::size_t> winners;
            if (op.kind == PostOp::Kind::Relu) v = relu(v);
            else if (op.kind == PostOp::Kind::MaxPool) v = maxpool2d(v, op.pool, winners);
            if (keep_cache) cache.pool_winners.push_back(std::move(winners));
        }
        if (keep_cache) cache.output = v;
        if (i + 1 < layers.size()) {
            const std::size_t cov = i + cov_shift;
            pass.trace.layers.push_back(neuron_activations(v));
            if (mask) zero_masked(v, *mask, cov);
        }
        cur = std::move(v);
        if (keep_cache) pass.layers.push_back(std::move(cache));
    }
    pass.trace.logits = cur;
    pass.trace.predicted_class = argmax(cur.data());
    return pass;
}

}  // namespace

ForwardPass forward_cached(const Model& model, const Tensor& x, const NeuronMask* mask) {
    return run(model, x, mask, true);
}

ActivationTrace forward(const Model& model, const Tensor& x, const NeuronMask* mask) {
    return run(model, x, mask, false).trace;
}

ActivationTrace forward(const Model& model, const Tensor& x, const NeuronMask& mask) {
    return forward_cached(model, x, &mask).trace;
}

Prediction predict(const Model& model, const Tensor& x, const NeuronMask* mask) {
    const auto trace = forward(model, x, mask);
    return {trace.predicted_class, trace.logits[trace.predicted_class]};
}

}  // namespace npc
