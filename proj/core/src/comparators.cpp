#include "npc/comparators.hpp"

#include "npc/error.hpp"
#include "npc/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace npc {

namespace {

std::vector<ActivationTrace> traces(const Model& m, std::span<const Tensor> inputs) {
    std::vector<ActivationTrace> out(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) { out[i] = forward(m, inputs[i]); });
    return out;
}

void check_ranges(const Model& m, const ActivationRanges& r) {
    if (r.layer_count() != m.coverage_layer_count()) throw DimensionError("activation ranges do not match model");
    for (std::size_t l = 0; l < r.layer_count(); ++l) {
        if (r.low[l].size() != m.neuron_count(l) || r.high[l].size() != m.neuron_count(l)) {
            throw DimensionError("activation ranges do not match model");
        }
    }
}

BaselineResult finish(std::string name, const std::vector<std::uint8_t>& hits, std::size_t degenerate) {
    BaselineResult r;
    r.criterion = std::move(name);
    r.total = hits.size();
    r.hit = static_cast<std::size_t>(std::count(hits.begin(), hits.end(), 1));
    r.ratio = r.total ? static_cast<double>(r.hit) / static_cast<double>(r.total) : 0.0;
    r.degenerate = degenerate;
    return r;
}

}  // namespace

ActivationRanges profile_ranges(const Model& m, std::span<const Tensor> inputs) {
    if (inputs.empty()) throw InvalidArgument("cannot profile activation ranges on an empty dataset");
    const auto ts = traces(m, inputs);
    ActivationRanges r;
    r.low = ts.front().layers;
    r.high = ts.front().layers;
    for (const auto& t : ts) {
        for (std::size_t l = 0; l < t.layers.size(); ++l) {
            for (std::size_t u = 0; u < t.layers[l].size(); ++u) {
                r.low[l][u] = std::min(r.low[l][u], t.layers[l][u]);
                r.high[l][u] = std::max(r.high[l][u], t.layers[l][u]);
            }
        }
    }
    return r;
}

ActivationRanges profile_ranges(const Model& m, const LabeledDataset& train) { return profile_ranges(m, train.inputs); }

BaselineResult nc(const Model& m, std::span<const Tensor> suite, double threshold) {
    std::vector<std::uint8_t> hits(m.total_neurons(), 0);
    for (const auto& t : traces(m, suite)) {
        for (std::size_t l = 0; l < t.layers.size(); ++l) {
            const std::size_t off = m.neuron_offset(l);
            for (std::size_t u = 0; u < t.layers[l].size(); ++u) {
                if (t.layers[l][u] > threshold) hits[off + u] = 1;
            }
        }
    }
    return finish("nc", hits, 0);
}

std::size_t kmnc_section(float v, float low, float high, std::size_t k) {
    const double span = static_cast<double>(high) - low;
    const auto s = static_cast<std::size_t>(std::floor((static_cast<double>(v) - low) / span * static_cast<double>(k)));
    return std::min(s, k - 1);
}

BaselineResult kmnc(const Model& m, std::span<const Tensor> suite, const ActivationRanges& ranges, std::size_t k) {
    if (k == 0) throw InvalidArgument("kmnc needs at least one section");
    check_ranges(m, ranges);
    std::vector<std::uint8_t> hits(m.total_neurons() * k, 0);
    std::size_t degenerate = 0;
    for (std::size_t l = 0; l < ranges.layer_count(); ++l) {
        for (std::size_t u = 0; u < ranges.low[l].size(); ++u) degenerate += ranges.low[l][u] == ranges.high[l][u];
    }
    for (const auto& t : traces(m, suite)) {
        for (std::size_t l = 0; l < t.layers.size(); ++l) {
            const std::size_t off = m.neuron_offset(l);
            for (std::size_t u = 0; u < t.layers[l].size(); ++u) {
                const float v = t.layers[l][u], lo = ranges.low[l][u], hi = ranges.high[l][u];
                std::uint8_t* row = hits.data() + (off + u) * k;
                if (lo == hi) {
                    if (v == lo) std::fill(row, row + k, 1);
                    continue;
                }
                if (v < lo || v > hi) continue;
                row[kmnc_section(v, lo, hi, k)] = 1;
            }
        }
    }
    return finish("kmnc", hits, degenerate);
}

BaselineResult nbc(const Model& m, std::span<const Tensor> suite, const ActivationRanges& ranges, std::size_t sections) {
    if (sections == 0) throw InvalidArgument("nbc needs at least one section per corner");
    check_ranges(m, ranges);
    std::vector<std::uint8_t> hits(m.total_neurons() * 2 * sections, 0);
    std::size_t degenerate = 0;
    for (std::size_t l = 0; l < ranges.layer_count(); ++l) {
        for (std::size_t u = 0; u < ranges.low[l].size(); ++u) degenerate += ranges.low[l][u] == ranges.high[l][u];
    }
    for (const auto& t : traces(m, suite)) {
        for (std::size_t l = 0; l < t.layers.size(); ++l) {
            const std::size_t off = m.neuron_offset(l);
            for (std::size_t u = 0; u < t.layers[l].size(); ++u) {
                const float v = t.layers[l][u], lo = ranges.low[l][u], hi = ranges.high[l][u];
                if (v >= lo && v <= hi) continue;
                const std::size_t corner = v < lo ? 0 : 1;
                const double d = v < lo ? static_cast<double>(lo) - v : static_cast<double>(v) - hi;
                const double w = (static_cast<double>(hi) - lo) / static_cast<double>(sections);
                std::size_t s = sections - 1;
                if (w > 0.0) s = std::min(sections - 1, static_cast<std::size_t>(std::floor(d / w)));
                hits[((off + u) * 2 + corner) * sections + s] = 1;
            }
        }
    }
    return finish("nbc", hits, degenerate);
}

std::string baseline_report_json(const BaselineResult& r) {
    nlohmann::json j = {{"criterion", r.criterion},
                        {"cells_covered", r.hit},
                        {"cells_total", r.total},
                        {"ratio", r.ratio},
                        {"degenerate_ranges", r.degenerate}};
    return j.dump(2);
}

}  // namespace npc
