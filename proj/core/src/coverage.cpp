#include "npc/coverage.hpp"

#include "npc/error.hpp"
#include "npc/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>

namespace npc {

const char* criterion_name(Criterion c) noexcept { return c == Criterion::Snpc ? "snpc" : "anpc"; }

Criterion parse_criterion(const std::string& name) {
    if (name == "snpc") return Criterion::Snpc;
    if (name == "anpc") return Criterion::Anpc;
    throw InvalidArgument("unknown criterion '" + name + "', expected snpc or anpc");
}

CoverageState::CoverageState(const DecisionGraph& g, Criterion criterion, CoverageConfig config)
    : graph_(&g), criterion_(criterion), config_(config) {
    if (config_.m < 1) throw InvalidArgument("bucket count must be at least 1");
    if (!(config_.u > 0.0) || !std::isfinite(config_.u)) throw InvalidArgument("distance bound must be positive");
    classes_ = g.class_count();
    clusters_ = g.params.k;
    layers_ = g.layer_count();
    total_ = classes_ * clusters_ * layers_ * config_.m;
    bits_.assign((total_ + 63) / 64, 0);
    per_class_.assign(classes_, 0);
}

std::size_t CoverageState::index_of(const Cell& c) const {
    if (c.class_id >= classes_ || c.cluster_id >= clusters_ || c.layer >= layers_ || c.bucket < 1 ||
        c.bucket > config_.m) {
        throw InvalidArgument("cell out of range");
    }
    return ((c.class_id * clusters_ + c.cluster_id) * layers_ + c.layer) * config_.m + (c.bucket - 1);
}

bool CoverageState::contains(const Cell& c) const {
    const auto i = index_of(c);
    return (bits_[i / 64] >> (i % 64)) & 1u;
}

bool CoverageState::insert(const Cell& c) {
    const auto i = index_of(c);
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    if (bits_[i / 64] & bit) return false;
    bits_[i / 64] |= bit;
    ++covered_;
    ++per_class_[c.class_id];
    return true;
}

std::vector<Cell> CoverageState::insert(const CellBatch& batch) {
    std::vector<Cell> fresh;
    for (const auto& c : batch.cells) {
        if (insert(c)) fresh.push_back(c);
    }
    clamped_ += batch.clamped;
    return fresh;
}

void CoverageState::merge(const CoverageState& other) {
    if (other.criterion_ != criterion_ || other.config_.m != config_.m || other.config_.u != config_.u ||
        other.total_ != total_ || other.graph_->model_hash != graph_->model_hash) {
        throw InvalidArgument("cannot merge coverage states with different settings");
    }
    covered_ = 0;
    std::fill(per_class_.begin(), per_class_.end(), 0);
    for (std::size_t w = 0; w < bits_.size(); ++w) bits_[w] |= other.bits_[w];
    const std::size_t per_class = total_ / std::max<std::size_t>(1, classes_);
    for (std::size_t w = 0; w < bits_.size(); ++w) {
        std::uint64_t word = bits_[w];
        covered_ += static_cast<std::size_t>(std::popcount(word));
        while (word) {
            const std::size_t i = w * 64 + static_cast<std::size_t>(std::countr_zero(word));
            ++per_class_[i / per_class];
            word &= word - 1;
        }
    }
    clamped_ += other.clamped_;
}

std::vector<Cell> CoverageState::cells() const {
    std::vector<Cell> out;
    out.reserve(covered_);
    for (std::size_t w = 0; w < bits_.size(); ++w) {
        std::uint64_t word = bits_[w];
        while (word) {
            std::size_t i = w * 64 + static_cast<std::size_t>(std::countr_zero(word));
            word &= word - 1;
            Cell c;
            c.bucket = i % config_.m + 1;
            i /= config_.m;
            c.layer = i % layers_;
            i /= layers_;
            c.cluster_id = i % clusters_;
            c.class_id = i / clusters_;
            out.push_back(c);
        }
    }
    return out;
}

std::size_t jaccard_bucket(std::size_t inter, std::size_t uni, std::size_t m) {
    if (uni == 0) return m;
    if (inter > uni) throw InvalidArgument("intersection larger than union");
    if (inter == 0) return 1;
    // ceil(inter * m / uni), exact in integers
    return (inter * m + uni - 1) / uni;
}

std::size_t distance_bucket(double d, double u, std::size_t m, bool* clamped) {
    if (clamped) *clamped = false;
    if (!(d >= 0.0)) throw InvalidArgument("distance must be non-negative");
    if (d >= u) {
        if (clamped && d > u) *clamped = true;
        return m;
    }
    if (d == 0.0) return 1;
    const auto b = static_cast<std::size_t>(std::ceil(d * static_cast<double>(m) / u));
    return std::clamp<std::size_t>(b, 1, m);
}

namespace {

void check_graph(const Model& view, const DecisionGraph& g) {
    if (view.content_hash() != g.model_hash) {
        throw HashMismatchError("decision graph was built for model " + to_hex(g.model_hash) + ", got model " +
                                to_hex(view.content_hash()));
    }
    if (view.includes_input_layer() != g.params.include_input || view.coverage_layer_count() != g.layer_count()) {
        throw DimensionError("model view does not match the decision graph's layers");
    }
}

// Per-layer Jaccard between a query bit vector and a member's, over bit ranges.
double bitset_similarity(const PathVector& a, const PathVector& b, const std::vector<std::size_t>& sizes) {
    if (sizes.empty()) return 1.0;
    double acc = 0.0;
    std::size_t offset = 0;
    for (auto n : sizes) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = offset; i < offset + n; ++i) {
            const bool x = a.test(i), y = b.test(i);
            inter += x && y;
            uni += x || y;
        }
        acc += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        offset += n;
    }
    return acc / static_cast<double>(sizes.size());
}

PathVector to_bits(const CriticalPath& p, const DecisionGraph& g) {
    if (p.layers.size() != g.layer_count()) throw DimensionError("path geometry does not match graph");
    PathVector v(g.total_neurons());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        for (auto u : p.layers[l]) {
            if (u >= g.layer_sizes[l]) throw DimensionError("path unit out of range");
            v.set(offset + u);
        }
        offset += g.layer_sizes[l];
    }
    return v;
}

std::optional<std::size_t> nearest_by_bits(const Cluster& cl, const PathVector& q, const DecisionGraph& g) {
    if (cl.empty()) return std::nullopt;
    std::size_t best = 0;
    double best_s = -1.0;
    for (std::size_t t = 0; t < cl.members.size(); ++t) {
        const double s = bitset_similarity(q, cl.member_bits[t], g.layer_sizes);
        // members are ascending, so the first maximum has the lowest id
        if (s > best_s) {
            best_s = s;
            best = t;
        }
    }
    return best;
}

}  // namespace

std::optional<std::size_t> nearest_member(const DecisionGraph& g, std::size_t class_id, std::size_t cluster_id,
                                          const CriticalPath& p) {
    const auto& cl = g.classes.at(class_id).at(cluster_id);
    return nearest_by_bits(cl, to_bits(p, g), g);
}

CellBatch snpc_cells(const Model& view, const DecisionGraph& g, const Tensor& x, const CoverageConfig& cfg) {
    check_graph(view, g);
    const auto a = analyze(view, x, g.params.alpha, LrpOptions{g.params.lrp_rule, 1e-6});
    CellBatch out;
    out.predicted_class = a.trace.predicted_class;
    const auto& clusters = g.classes.at(out.predicted_class);
    for (const auto& cl : clusters) {
        if (cl.empty()) continue;
        for (std::size_t l = 0; l < g.layer_count(); ++l) {
            const auto units = cl.abstract.units(l);
            const auto& mine = a.path.layers[l];
            std::size_t inter = 0, i = 0, j = 0;
            while (i < mine.size() && j < units.size()) {
                if (mine[i] == units[j]) {
                    ++inter;
                    ++i;
                    ++j;
                } else if (mine[i] < units[j]) {
                    ++i;
                } else {
                    ++j;
                }
            }
            const std::size_t uni = mine.size() + units.size() - inter;
            out.cells.push_back({cl.class_id, cl.cluster_id, l, jaccard_bucket(inter, uni, cfg.m)});
        }
    }
    return out;
}

CellBatch anpc_cells(const Model& view, const DecisionGraph& g, const Tensor& x, const CoverageConfig& cfg) {
    check_graph(view, g);
    const auto a = analyze(view, x, g.params.alpha, LrpOptions{g.params.lrp_rule, 1e-6});
    CellBatch out;
    out.predicted_class = a.trace.predicted_class;
    const PathVector q = to_bits(a.path, g);
    for (const auto& cl : g.classes.at(out.predicted_class)) {
        const auto nearest = nearest_by_bits(cl, q, g);
        if (!nearest) continue;
        const auto ref = cl.member_activations(*nearest);
        std::size_t pos = 0;
        for (std::size_t l = 0; l < g.layer_count(); ++l) {
            double d2 = 0.0;
            for (const auto& wu : cl.abstract.layers[l]) {
                const double diff = static_cast<double>(a.trace.layers[l][wu.unit]) - ref[pos++];
                d2 += diff * diff;
            }
            bool clamped = false;
            out.cells.push_back({cl.class_id, cl.cluster_id, l, distance_bucket(std::sqrt(d2), cfg.u, cfg.m, &clamped)});
            out.clamped += clamped;
        }
    }
    return out;
}

namespace {

Model view_for(const Model& m, const DecisionGraph& g) {
    return m.includes_input_layer() == g.params.include_input ? m : model_for_graph(m, g);
}

std::vector<Cell> update(CoverageState& state, const Model& m, const DecisionGraph& g, const Tensor& x,
                         Criterion expected) {
    if (state.criterion() != expected) throw InvalidArgument("coverage state criterion mismatch");
    if (&state.graph() != &g && state.graph().model_hash != g.model_hash) {
        throw InvalidArgument("coverage state belongs to another graph");
    }
    const Model view = view_for(m, g);
    const auto batch = expected == Criterion::Snpc ? snpc_cells(view, g, x, state.config())
                                                   : anpc_cells(view, g, x, state.config());
    return state.insert(batch);
}

}  // namespace

std::vector<Cell> snpc_update(CoverageState& state, const Model& m, const DecisionGraph& g, const Tensor& x) {
    return update(state, m, g, x, Criterion::Snpc);
}

std::vector<Cell> anpc_update(CoverageState& state, const Model& m, const DecisionGraph& g, const Tensor& x) {
    return update(state, m, g, x, Criterion::Anpc);
}

void cover_suite(CoverageState& state, const Model& m, std::span<const Tensor> suite) {
    const auto& g = state.graph();
    const Model view = view_for(m, g);
    std::vector<CellBatch> batches(suite.size());
    parallel_for(suite.size(), [&](std::size_t i) {
        batches[i] = state.criterion() == Criterion::Snpc ? snpc_cells(view, g, suite[i], state.config())
                                                          : anpc_cells(view, g, suite[i], state.config());
    });
    for (const auto& b : batches) state.insert(b);
}

double coverage(const CoverageState& state) noexcept {
    if (state.cells_total() == 0) return 0.0;
    return static_cast<double>(state.cells_covered()) / static_cast<double>(state.cells_total());
}

std::string coverage_report_json(const CoverageState& state) {
    using nlohmann::json;
    const auto& g = state.graph();
    json per_class = json::array();
    for (std::size_t c = 0; c < g.class_count(); ++c) {
        json empty_clusters = json::array();
        for (const auto& cl : g.classes[c]) {
            if (cl.empty()) empty_clusters.push_back(cl.cluster_id);
        }
        const std::size_t total = state.class_cells_total();
        const std::size_t covered = state.class_cells_covered(c);
        per_class.push_back({{"class", c},
                             {"cells_covered", covered},
                             {"cells_total", total},
                             {"ratio", total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0},
                             {"empty_clusters", empty_clusters}});
    }
    json report = {{"criterion", criterion_name(state.criterion())},
                   {"m", state.config().m},
                   {"u", state.config().u},
                   {"cells_covered", state.cells_covered()},
                   {"cells_total", state.cells_total()},
                   {"ratio", coverage(state)},
                   {"clamped_count", state.clamped_count()},
                   {"per_class", per_class},
                   {"lrp_rule", state.graph().params.lrp_rule == LrpRule::ZPlus ? "zplus" : "epsilon"},
                   {"conv_neuron", "channel"},
                   {"include_input", state.graph().params.include_input}};
    return report.dump(2);
}

}  // namespace npc
