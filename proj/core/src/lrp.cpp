#include "npc/lrp.hpp"

#include "npc/error.hpp"

#include <cmath>
#include <numeric>

namespace npc {

namespace {

struct Field {
    Shape shape;
    std::vector<double> values;
};

std::vector<double> per_neuron(const Field& f) {
    if (f.shape.size() != 3) return f.values;
    const std::size_t plane = f.shape[1] * f.shape[2];
    std::vector<double> out(f.shape[0], 0.0);
    for (std::size_t c = 0; c < f.shape[0]; ++c) {
        for (std::size_t i = 0; i < plane; ++i) out[c] += f.values[c * plane + i];
    }
    return out;
}

double stabilized(double z, double eps) { return z + eps * (z >= 0.0 ? 1.0 : -1.0); }

// Relevance of a dense layer's output redistributed onto its input.
Field dense_rule(const LayerSpec& spec, const Tensor& input, const std::vector<double>& r_out,
                 const LrpOptions& opt, double& absorbed) {
    const std::size_t out = spec.weight.dim(0), in = spec.weight.dim(1);
    Field r_in{input.shape(), std::vector<double>(in, 0.0)};
    for (std::size_t o = 0; o < out; ++o) {
        if (r_out[o] == 0.0) continue;
        const float* w = spec.weight.data().data() + o * in;
        if (opt.rule == LrpRule::Epsilon) {
            double z = spec.bias[o];
            for (std::size_t j = 0; j < in; ++j) z += static_cast<double>(input[j]) * w[j];
            const double s = r_out[o] / stabilized(z, opt.epsilon);
            for (std::size_t j = 0; j < in; ++j) r_in.values[j] += static_cast<double>(input[j]) * w[j] * s;
            absorbed += static_cast<double>(spec.bias[o]) * s;
        } else {
            double zp = 0.0;
            for (std::size_t j = 0; j < in; ++j) zp += std::max(0.0, static_cast<double>(input[j]) * w[j]);
            if (zp <= 0.0) {
                absorbed += r_out[o];
                continue;
            }
            const double s = r_out[o] / zp;
            for (std::size_t j = 0; j < in; ++j) r_in.values[j] += std::max(0.0, static_cast<double>(input[j]) * w[j]) * s;
        }
    }
    return r_in;
}

Field conv_rule(const LayerSpec& spec, const Tensor& input, const Field& r_out, const LrpOptions& opt,
                double& absorbed) {
    const std::size_t kcount = spec.weight.dim(0), channels = spec.weight.dim(1);
    const std::size_t kh = spec.weight.dim(2), kw = spec.weight.dim(3);
    const std::size_t h = input.dim(1), w = input.dim(2);
    const std::size_t oh = r_out.shape[1], ow = r_out.shape[2];
    const auto pad = static_cast<std::ptrdiff_t>(spec.conv.padding);
    const auto stride = static_cast<std::ptrdiff_t>(spec.conv.stride);
    Field r_in{input.shape(), std::vector<double>(input.size(), 0.0)};

    // Visits every in-bounds (input index, weight index) pair feeding output (k, oy, ox).
    auto for_window = [&](std::size_t k, std::size_t oy, std::size_t ox, auto&& fn) {
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(ky);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride - pad + static_cast<std::ptrdiff_t>(kx);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    fn((c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix),
                       ((k * channels + c) * kh + ky) * kw + kx);
                }
            }
        }
    };

    for (std::size_t k = 0; k < kcount; ++k) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double r = r_out.values[(k * oh + oy) * ow + ox];
                if (r == 0.0) continue;
                if (opt.rule == LrpRule::Epsilon) {
                    double z = spec.bias[k];
                    for_window(k, oy, ox, [&](std::size_t i, std::size_t wi) {
                        z += static_cast<double>(input[i]) * spec.weight[wi];
                    });
                    const double s = r / stabilized(z, opt.epsilon);
                    for_window(k, oy, ox, [&](std::size_t i, std::size_t wi) {
                        r_in.values[i] += static_cast<double>(input[i]) * spec.weight[wi] * s;
                    });
                    absorbed += static_cast<double>(spec.bias[k]) * s;
                } else {
                    double zp = 0.0;
                    for_window(k, oy, ox, [&](std::size_t i, std::size_t wi) {
                        zp += std::max(0.0, static_cast<double>(input[i]) * spec.weight[wi]);
                    });
                    if (zp <= 0.0) {
                        absorbed += r;
                        continue;
                    }
                    const double s = r / zp;
                    for_window(k, oy, ox, [&](std::size_t i, std::size_t wi) {
                        r_in.values[i] += std::max(0.0, static_cast<double>(input[i]) * spec.weight[wi]) * s;
                    });
                }
            }
        }
    }
    return r_in;
}

}  // namespace

double RelevanceTrace::layer_sum(std::size_t layer) const {
    const auto& l = layers.at(layer);
    return std::accumulate(l.begin(), l.end(), 0.0);
}

double RelevanceTrace::conservation_gap(std::size_t layer) const {
    return std::abs(layer_sum(layer) + absorbed.at(layer) - origin_logit);
}

RelevanceTrace relevance(const Model& model, const ForwardPass& pass, std::optional<std::size_t> target,
                         const LrpOptions& options) {
    const auto& layers = model.layers();
    if (pass.layers.size() != layers.size()) throw InvalidArgument("forward pass was not cached");
    const std::size_t cls = target.value_or(pass.trace.predicted_class);
    if (cls >= model.class_count()) throw InvalidArgument("relevance target " + std::to_string(cls) + " out of range");

    RelevanceTrace trace;
    trace.target_class = cls;
    trace.origin_logit = pass.trace.logits[cls];
    const std::size_t cov_count = model.coverage_layer_count();
    const std::size_t cov_shift = model.includes_input_layer() ? 1 : 0;
    trace.layers.resize(cov_count);
    trace.absorbed.resize(cov_count, 0.0);

    Field r{pass.trace.logits.shape(), std::vector<double>(model.class_count(), 0.0)};
    r.values[cls] = trace.origin_logit;
    double absorbed = 0.0;

    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& spec = layers[li];
        const auto& cache = pass.layers[li];
        if (li + 1 < layers.size()) {
            r.shape = cache.output.shape();
            trace.layers[li + cov_shift] = per_neuron(r);
            trace.absorbed[li + cov_shift] = absorbed;
        }
        for (std::size_t s = spec.post_ops.size(); s-- > 0;) {
            const auto& op = spec.post_ops[s];
            if (op.kind != PostOp::Kind::MaxPool) continue;
            const auto& in = cache.stage_inputs[s];
            Field routed{in.shape(), std::vector<double>(in.size(), 0.0)};
            const auto& winners = cache.pool_winners[s];
            for (std::size_t o = 0; o < r.values.size(); ++o) routed.values[winners[o]] += r.values[o];
            r = std::move(routed);
        }
        if (spec.kind == LayerKind::Dense) {
            r = dense_rule(spec, cache.input, r.values, options, absorbed);
        } else {
            r.shape = cache.pre.shape();
            r = conv_rule(spec, cache.input, r, options, absorbed);
        }
    }
    if (cov_shift) {
        r.shape = model.input_shape();
        trace.layers[0] = per_neuron(r);
        trace.absorbed[0] = absorbed;
    }
    return trace;
}

RelevanceTrace relevance(const Model& model, const Tensor& x, std::optional<std::size_t> target,
                         const LrpOptions& options) {
    return relevance(model, forward_cached(model, x), target, options);
}

}  // namespace npc
