#include "npc/cdp.hpp"

#include "npc/error.hpp"
#include "npc/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace npc {

std::size_t CriticalPath::neuron_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
}

std::vector<std::vector<std::uint32_t>> ranked_critical_neurons(const RelevanceTrace& r, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1], got " + std::to_string(alpha));
    std::vector<std::vector<std::uint32_t>> out(r.layers.size());
    for (std::size_t l = 0; l < r.layers.size(); ++l) {
        const auto& rel = r.layers[l];
        std::vector<std::uint32_t> positive;
        double positive_mass = 0.0;
        for (std::uint32_t u = 0; u < rel.size(); ++u) {
            if (rel[u] > 0.0) {
                positive.push_back(u);
                positive_mass += rel[u];
            }
        }
        std::stable_sort(positive.begin(), positive.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return rel[a] > rel[b]; });
        const double budget = r.origin_logit > 0.0 ? alpha * r.origin_logit : alpha * positive_mass;
        double sum = 0.0;
        std::size_t keep = positive.size();
        for (std::size_t i = 0; i < positive.size(); ++i) {
            sum += rel[positive[i]];
            if (sum > budget) {
                keep = i + 1;
                break;
            }
        }
        positive.resize(keep);
        out[l] = std::move(positive);
    }
    return out;
}

CriticalPath extract_cdp(const RelevanceTrace& r, double alpha) {
    CriticalPath p;
    p.alpha = alpha;
    p.layers = ranked_critical_neurons(r, alpha);
    for (auto& l : p.layers) std::sort(l.begin(), l.end());
    return p;
}

double width(const CriticalPath& p, const Model& m) {
    if (p.layers.size() != m.coverage_layer_count()) {
        throw DimensionError("path has " + std::to_string(p.layers.size()) + " layers, model has " +
                             std::to_string(m.coverage_layer_count()));
    }
    if (p.layers.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        acc += static_cast<double>(p.layers[l].size()) / static_cast<double>(m.neuron_count(l));
    }
    return acc / static_cast<double>(p.layers.size());
}

NeuronMask path_mask(const CriticalPath& p, const Model& m) {
    NeuronMask mask(m);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        for (auto u : p.layers[l]) mask.set(static_cast<std::uint32_t>(l), u);
    }
    return mask;
}

NeuronMask ncdp(const CriticalPath& p, const Model& m) {
    if (p.layers.size() != m.coverage_layer_count()) throw DimensionError("path geometry does not match model");
    NeuronMask mask(m);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        std::size_t next = 0;
        const auto& sel = p.layers[l];
        for (std::uint32_t u = 0; u < m.neuron_count(l); ++u) {
            while (next < sel.size() && sel[next] < u) ++next;
            if (next < sel.size() && sel[next] == u) continue;
            mask.set(static_cast<std::uint32_t>(l), u);
        }
    }
    return mask;
}

double layer_jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double path_similarity(const CriticalPath& p, const CriticalPath& q) {
    if (p.layers.size() != q.layers.size()) throw DimensionError("paths have different layer counts");
    if (p.layers.empty()) return 1.0;
    double acc = 0.0;
    for (std::size_t l = 0; l < p.layers.size(); ++l) acc += layer_jaccard(p.layers[l], q.layers[l]);
    return acc / static_cast<double>(p.layers.size());
}

SampleAnalysis analyze(const Model& m, const Tensor& x, double alpha, const LrpOptions& lrp) {
    auto pass = forward_cached(m, x);
    SampleAnalysis out;
    out.relevance = relevance(m, pass, std::nullopt, lrp);
    out.path = extract_cdp(out.relevance, alpha);
    out.trace = std::move(pass.trace);
    return out;
}

InconsistencyResult inconsistency_rate(const Model& m, std::span<const Tensor> inputs, const MaskBuilder& builder) {
    if (inputs.empty()) throw InvalidArgument("inconsistency rate needs at least one input");
    std::vector<std::uint8_t> changed(inputs.size(), 0);
    parallel_for(inputs.size(), [&](std::size_t i) {
        const auto pass = forward_cached(m, inputs[i]);
        const NeuronMask mask = builder(i, pass);
        changed[i] = predict(m, inputs[i], &mask).label != pass.trace.predicted_class ? 1 : 0;
    });
    InconsistencyResult r;
    r.samples = inputs.size();
    r.changed = static_cast<std::size_t>(std::count(changed.begin(), changed.end(), 1));
    r.rate = static_cast<double>(r.changed) / static_cast<double>(r.samples);
    return r;
}

InconsistencyResult mask_eval(const Model& m, const LabeledDataset& data, double alpha, MaskTarget target,
                              const LrpOptions& lrp) {
    std::vector<double> widths(data.size(), 0.0);
    auto result = inconsistency_rate(m, data.inputs, [&](std::size_t i, const ForwardPass& pass) {
        const auto path = extract_cdp(relevance(m, pass, std::nullopt, lrp), alpha);
        widths[i] = width(path, m);
        return target == MaskTarget::Cdp ? path_mask(path, m) : ncdp(path, m);
    });
    result.mean_width = std::accumulate(widths.begin(), widths.end(), 0.0) / static_cast<double>(widths.size());
    return result;
}

std::array<double, 5> quintile_mask_eval(const Model& m, const LabeledDataset& data, double alpha,
                                         const LrpOptions& lrp) {
    if (data.empty()) throw InvalidArgument("quintile masking needs at least one input");
    std::vector<std::array<std::uint8_t, 5>> changed(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        const auto pass = forward_cached(m, data.inputs[i]);
        const auto ranked = ranked_critical_neurons(relevance(m, pass, std::nullopt, lrp), alpha);
        for (std::size_t band = 0; band < 5; ++band) {
            NeuronMask mask(m);
            for (std::size_t l = 0; l < ranked.size(); ++l) {
                const std::size_t n = ranked[l].size(), base = n / 5, rem = n % 5;
                const std::size_t begin = band * base + std::min(band, rem);
                const std::size_t len = base + (band < rem ? 1 : 0);
                for (std::size_t k = begin; k < begin + len; ++k) mask.set(static_cast<std::uint32_t>(l), ranked[l][k]);
            }
            changed[i][band] = predict(m, data.inputs[i], &mask).label != pass.trace.predicted_class ? 1 : 0;
        }
    });
    std::array<double, 5> rates{};
    for (const auto& c : changed) {
        for (std::size_t b = 0; b < 5; ++b) rates[b] += c[b];
    }
    for (auto& r : rates) r /= static_cast<double>(data.size());
    return rates;
}

}  // namespace npc
