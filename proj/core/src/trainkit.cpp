#include "npc/trainkit.hpp"

#include "npc/error.hpp"
#include "npc/parallel.hpp"
#include "npc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace npc {

namespace detail {
struct ModelAccess {
    static std::vector<LayerSpec>& layers(Model& m) { return m.layers_; }
    static void rehash(Model& m) { m.rehash(); }
};
}  // namespace detail

namespace {

void mask_gradient(Tensor& g, const NeuronMask& mask, std::size_t layer) {
    if (!mask.layer_has_any(layer)) return;
    if (g.rank() == 3) {
        const std::size_t plane = g.dim(1) * g.dim(2);
        for (std::size_t c = 0; c < g.dim(0); ++c) {
            if (!mask.contains(layer, c)) continue;
            std::fill_n(g.data().begin() + static_cast<std::ptrdiff_t>(c * plane), plane, 0.0f);
        }
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (mask.contains(layer, i)) g[i] = 0.0f;
        }
    }
}

}  // namespace

double cross_entropy(const Tensor& logits, std::size_t label, Tensor* logit_grad) {
    const auto z = logits.data();
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (float v : z) denom += std::exp(static_cast<double>(v) - zmax);
    const double log_denom = std::log(denom) + zmax;
    if (logit_grad) {
        *logit_grad = Tensor(logits.shape());
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double p = std::exp(static_cast<double>(z[i]) - log_denom);
            (*logit_grad)[i] = static_cast<float>(p - (i == label ? 1.0 : 0.0));
        }
    }
    return log_denom - z[label];
}

Gradients backward(const Model& model, const ForwardPass& pass, const Tensor& logit_grad,
                   const NeuronMask* mask, bool want_params) {
    const auto& layers = model.layers();
    if (pass.layers.size() != layers.size()) throw InvalidArgument("forward pass was not cached");
    const std::size_t cov_shift = model.includes_input_layer() ? 1 : 0;

    Gradients grads;
    if (want_params) {
        grads.weight.resize(layers.size());
        grads.bias.resize(layers.size());
    }

    Tensor g = logit_grad;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& spec = layers[li];
        const auto& cache = pass.layers[li];
        g = g.reshaped(cache.output.shape());
        if (li + 1 < layers.size() && mask) mask_gradient(g, *mask, li + cov_shift);

        for (std::size_t s = spec.post_ops.size(); s-- > 0;) {
            const auto& op = spec.post_ops[s];
            const Tensor& in = cache.stage_inputs[s];
            if (op.kind == PostOp::Kind::Relu) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!(in[i] > 0.0f)) g[i] = 0.0f;
                }
            } else if (op.kind == PostOp::Kind::MaxPool) {
                Tensor routed(in.shape());
                const auto& winners = cache.pool_winners[s];
                for (std::size_t o = 0; o < g.size(); ++o) routed[winners[o]] += g[o];
                g = std::move(routed);
            }
        }

        const Tensor& input = cache.input;
        Tensor g_in(input.shape());
        if (spec.kind == LayerKind::Dense) {
            const std::size_t out = spec.weight.dim(0), in = spec.weight.dim(1);
            std::vector<double> acc(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double go = g[o];
                if (go == 0.0) continue;
                for (std::size_t j = 0; j < in; ++j) acc[j] += go * spec.weight[o * in + j];
            }
            for (std::size_t j = 0; j < in; ++j) g_in[j] = static_cast<float>(acc[j]);
            if (want_params) {
                Tensor dw(spec.weight.shape());
                for (std::size_t o = 0; o < out; ++o) {
                    for (std::size_t j = 0; j < in; ++j) dw[o * in + j] = g[o] * input[j];
                }
                grads.weight[li] = std::move(dw);
                grads.bias[li] = g.reshaped({out});
            }
        } else {
            const std::size_t kcount = spec.weight.dim(0), channels = spec.weight.dim(1);
            const std::size_t kh = spec.weight.dim(2), kw = spec.weight.dim(3);
            const std::size_t h = input.dim(1), w = input.dim(2);
            const std::size_t oh = g.dim(1), ow = g.dim(2);
            const auto pad = static_cast<std::ptrdiff_t>(spec.conv.padding);
            const auto stride = static_cast<std::ptrdiff_t>(spec.conv.stride);
            std::vector<double> acc(g_in.size(), 0.0);
            std::vector<double> dw(want_params ? spec.weight.size() : 0, 0.0);
            std::vector<double> db(want_params ? kcount : 0, 0.0);
            for (std::size_t k = 0; k < kcount; ++k) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const double go = g.at(k, oy, ox);
                        if (go == 0.0) continue;
                        if (want_params) db[k] += go;
                        for (std::size_t c = 0; c < channels; ++c) {
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(ky);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride - pad + static_cast<std::ptrdiff_t>(kx);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                    const std::size_t widx = ((k * channels + c) * kh + ky) * kw + kx;
                                    const std::size_t iidx = (c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                                    acc[iidx] += go * spec.weight[widx];
                                    if (want_params) dw[widx] += go * input[iidx];
                                }
                            }
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < acc.size(); ++i) g_in[i] = static_cast<float>(acc[i]);
            if (want_params) {
                grads.weight[li] = Tensor(spec.weight.shape(), std::vector<float>(dw.begin(), dw.end()));
                grads.bias[li] = Tensor({kcount}, std::vector<float>(db.begin(), db.end()));
            }
        }
        g = std::move(g_in);
    }
    g = g.reshaped(model.input_shape());
    if (cov_shift && mask) mask_gradient(g, *mask, 0);
    grads.input = std::move(g);
    return grads;
}

Tensor grad_input(const Model& model, const Tensor& x, const Objective& objective, const NeuronMask* mask) {
    const auto pass = forward_cached(model, x, mask);
    if (objective.target >= model.class_count()) {
        throw InvalidArgument("objective class " + std::to_string(objective.target) + " out of range");
    }
    Tensor dlogits(pass.trace.logits.shape());
    if (objective.kind == Objective::Kind::TargetLogit) {
        dlogits[objective.target] = 1.0f;
    } else {
        cross_entropy(pass.trace.logits, objective.target, &dlogits);
    }
    return backward(model, pass, dlogits, mask, false).input.reshaped(x.shape());
}

Architecture Architecture::mlp(std::size_t inputs, std::vector<std::size_t> hidden, std::size_t classes) {
    Architecture a;
    a.input_shape = {inputs};
    a.class_count = classes;
    for (auto units : hidden) {
        ArchLayer l;
        l.kind = LayerKind::Dense;
        l.units = units;
        a.hidden.push_back(l);
    }
    return a;
}

Model init_model(const Architecture& arch, std::uint64_t seed) {
    if (arch.class_count < 2) throw InvalidArgument("a classifier needs at least 2 classes");
    Rng rng = Rng::stream(seed, "train.init");
    std::vector<LayerSpec> layers;
    Shape cur = arch.input_shape;

    auto he_uniform = [&](Shape shape, std::size_t fan_in) {
        Tensor t(std::move(shape));
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
        return t;
    };

    for (const auto& h : arch.hidden) {
        if (h.units == 0) throw InvalidArgument("layer width must be positive");
        std::vector<PostOp> ops;
        if (h.relu) ops.push_back(PostOp::relu());
        if (h.kind == LayerKind::Dense) {
            const std::size_t fan_in = shape_numel(cur);
            layers.push_back(LayerSpec::dense(he_uniform({h.units, fan_in}, fan_in), Tensor({h.units}), ops));
            cur = {h.units};
        } else {
            if (cur.size() != 3) throw DimensionError("conv layer needs a C x H x W input, got " + shape_str(cur));
            if (h.pool) ops.push_back(PostOp::maxpool(h.pool->window, h.pool->stride));
            const std::size_t fan_in = cur[0] * h.kernel * h.kernel;
            layers.push_back(LayerSpec::conv2d(he_uniform({h.units, cur[0], h.kernel, h.kernel}, fan_in),
                                               Tensor({h.units}), h.conv, ops));
            cur = {h.units, conv_output_extent(cur[1], h.kernel, h.conv), conv_output_extent(cur[2], h.kernel, h.conv)};
            if (h.pool) cur = {cur[0], pool_output_extent(cur[1], *h.pool), pool_output_extent(cur[2], *h.pool)};
        }
    }
    const std::size_t fan_in = shape_numel(cur);
    if (cur.size() == 3) layers.back().post_ops.push_back(PostOp::flatten());
    layers.push_back(LayerSpec::dense(he_uniform({arch.class_count, fan_in}, fan_in), Tensor({arch.class_count})));
    return Model(arch.input_shape, std::move(layers), arch.class_count);
}

double accuracy(const Model& model, const LabeledDataset& data) {
    if (data.empty()) return 0.0;
    if (!data.has_labels()) throw InvalidArgument("accuracy needs labeled data");
    std::vector<std::uint8_t> hit(data.size(), 0);
    parallel_for(data.size(), [&](std::size_t i) {
        hit[i] = predict(model, data.inputs[i]).label == data.labels[i] ? 1 : 0;
    });
    return static_cast<double>(std::accumulate(hit.begin(), hit.end(), std::size_t{0})) / static_cast<double>(data.size());
}

TrainResult train_sgd(const Architecture& arch, const LabeledDataset& data, const TrainConfig& config) {
    if (arch.class_count < 2) throw InvalidArgument("training needs at least 2 classes");
    if (config.learning_rate <= 0.0 || config.batch_size == 0) {
        throw InvalidArgument("learning rate and batch size must be positive");
    }
    if (data.empty()) throw InvalidArgument("training data is empty");
    if (!data.has_labels()) throw InvalidArgument("training data must be labeled");
    data.validate(arch.class_count);

    Model model = init_model(arch, config.seed);
    auto& layers = detail::ModelAccess::layers(model);
    Rng shuffle_rng = Rng::stream(config.seed, "train.shuffle");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<std::vector<double>> dw(layers.size()), db(layers.size());
            for (std::size_t l = 0; l < layers.size(); ++l) {
                dw[l].assign(layers[l].weight.size(), 0.0);
                db[l].assign(layers[l].bias.size(), 0.0);
            }
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                const auto pass = forward_cached(model, data.inputs[i]);
                Tensor dlogits;
                const double loss = cross_entropy(pass.trace.logits, data.labels[i], &dlogits);
                if (!std::isfinite(loss)) {
                    throw Error("training diverged (loss is not finite at epoch " + std::to_string(epoch) +
                                "); lower the learning rate");
                }
                epoch_loss += loss;
                const auto grads = backward(model, pass, dlogits);
                for (std::size_t l = 0; l < layers.size(); ++l) {
                    for (std::size_t k = 0; k < dw[l].size(); ++k) dw[l][k] += grads.weight[l][k];
                    for (std::size_t k = 0; k < db[l].size(); ++k) db[l][k] += grads.bias[l][k];
                }
            }
            const double step = config.learning_rate / static_cast<double>(end - start);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto w = layers[l].weight.data();
                auto bvals = layers[l].bias.data();
                for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<float>(w[k] - step * dw[l][k]);
                for (std::size_t k = 0; k < bvals.size(); ++k) bvals[k] = static_cast<float>(bvals[k] - step * db[l][k]);
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) {
            throw Error("training diverged (non-finite loss); lower the learning rate");
        }
        for (const auto& l : layers) {
            if (!l.weight.all_finite() || !l.bias.all_finite()) {
                throw Error("training diverged (non-finite weights); lower the learning rate");
            }
        }
    }
    detail::ModelAccess::rehash(model);

    TrainResult result{std::move(model), 0.0, epoch_loss};
    result.train_accuracy = accuracy(result.model, data);
    return result;
}

PgdResult pgd_attack(const Model& model, const Tensor& x, std::size_t label, const PgdConfig& config) {
    if (config.eps < 0.0) throw InvalidArgument("eps must be non-negative");
    const float eps = static_cast<float>(config.eps);
    const float step = static_cast<float>(config.step < 0.0 ? config.eps / 8.0 : config.step);

    // Per-coordinate feasible box: the eps-ball intersected with the input range,
    // with ball bounds nudged inward so |x' - x| <= eps holds exactly.
    Tensor lo(x.shape()), hi(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        float l = x[i] - eps, h = x[i] + eps;
        while (static_cast<double>(x[i]) - l > config.eps) l = std::nextafter(l, x[i]);
        while (static_cast<double>(h) - x[i] > config.eps) h = std::nextafter(h, x[i]);
        if (config.input_range) {
            l = std::max(l, config.input_range->first);
            h = std::min(h, config.input_range->second);
            if (l > h) l = h = x[i];
        }
        lo[i] = l;
        hi[i] = h;
    }

    Rng rng = Rng::stream(config.seed, "attack.start");
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        const float start = x[i] + static_cast<float>(rng.uniform(-config.eps, config.eps));
        adv[i] = std::clamp(start, lo[i], hi[i]);
    }

    PgdResult result;
    auto finish = [&] {
        result.predicted = predict(model, adv).label;
        result.misclassified = result.predicted != label;
    };
    finish();
    for (std::size_t it = 0; it < config.iters && !result.misclassified; ++it) {
        const Tensor g = grad_input(model, adv, Objective::cross_entropy(label));
        for (std::size_t i = 0; i < adv.size(); ++i) {
            const float dir = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
            adv[i] = std::clamp(adv[i] + step * dir, lo[i], hi[i]);
        }
        finish();
    }
    result.adversarial = std::move(adv);
    return result;
}

}  // namespace npc
