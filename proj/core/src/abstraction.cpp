#include "npc/abstraction.hpp"

#include "npc/error.hpp"
#include "npc/parallel.hpp"
#include "npc/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace npc {

using nlohmann::json;

std::size_t PathVector::popcount() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

PathVector encode(const CriticalPath& p, const Model& m) {
    if (p.layers.size() != m.coverage_layer_count()) throw DimensionError("path geometry does not match model");
    PathVector v(m.total_neurons());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::size_t offset = m.neuron_offset(l);
        for (auto u : p.layers[l]) {
            if (u >= m.neuron_count(l)) throw DimensionError("path unit out of range");
            v.set(offset + u);
        }
    }
    return v;
}

CriticalPath decode(const PathVector& v, const Model& m) {
    if (v.bits() != m.total_neurons()) throw DimensionError("path vector length does not match model");
    CriticalPath p;
    p.layers.resize(m.coverage_layer_count());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::size_t offset = m.neuron_offset(l);
        for (std::uint32_t u = 0; u < m.neuron_count(l); ++u) {
            if (v.test(offset + u)) p.layers[l].push_back(u);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

constexpr double kMoveTolerance = 1e-6;
constexpr std::size_t kMaxIterations = 100;

struct BitPoint {
    std::vector<std::uint32_t> ones;
};

double sq_distance(const BitPoint& p, const std::vector<double>& c, double c_norm2) {
    double d = c_norm2;
    for (auto i : p.ones) d += 1.0 - 2.0 * c[i];
    return std::max(d, 0.0);
}

double norm2(const std::vector<double>& c) {
    double s = 0.0;
    for (double v : c) s += v * v;
    return s;
}

std::vector<double> as_dense(const BitPoint& p, std::size_t dims) {
    std::vector<double> c(dims, 0.0);
    for (auto i : p.ones) c[i] = 1.0;
    return c;
}

}  // namespace

KMeansResult kmeans(std::span<const PathVector> vectors, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw InvalidArgument("k must be at least 1");
    if (vectors.empty()) throw InvalidArgument("k-means needs at least one vector");
    const std::size_t n = vectors.size();
    const std::size_t dims = vectors.front().bits();
    std::vector<BitPoint> points(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (vectors[i].bits() != dims) throw DimensionError("k-means vectors differ in length");
        for (std::size_t b = 0; b < dims; ++b) {
            if (vectors[i].test(b)) points[i].ones.push_back(static_cast<std::uint32_t>(b));
        }
    }

    KMeansResult result;
    result.assignment.assign(n, 0);
    result.empty.assign(k, false);

    if (n < k) {
        for (std::size_t i = 0; i < n; ++i) {
            result.assignment[i] = i;
            result.centroids.push_back(as_dense(points[i], dims));
        }
        for (std::size_t j = n; j < k; ++j) {
            result.centroids.emplace_back(dims, 0.0);
            result.empty[j] = true;
        }
        result.converged = true;
        return result;
    }

    // k-means++ seeding.
    Rng rng(seed);
    auto& centroids = result.centroids;
    centroids.push_back(as_dense(points[rng.index(n)], dims));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (centroids.size() < k) {
        const auto& last = centroids.back();
        const double last_norm = norm2(last);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], sq_distance(points[i], last, last_norm));
            total += nearest[i];
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.index(n);
        } else {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += nearest[i];
                if (acc > target && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(as_dense(points[pick], dims));
    }

    std::vector<double> norms(k);
    std::vector<double> point_dist(n);
    for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
        result.iterations = iter + 1;
        for (std::size_t j = 0; j < k; ++j) norms[j] = norm2(centroids[j]);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = sq_distance(points[i], centroids[0], norms[0]);
            for (std::size_t j = 1; j < k; ++j) {
                const double d = sq_distance(points[i], centroids[j], norms[j]);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            result.assignment[i] = best;
            point_dist[i] = best_d;
            ++counts[best];
        }
        // Reseed empty clusters with the farthest point that is not a singleton.
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] != 0) continue;
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[result.assignment[i]] <= 1) continue;
                if (far == n || point_dist[i] > point_dist[far]) far = i;
            }
            if (far == n) break;
            --counts[result.assignment[far]];
            result.assignment[far] = j;
            point_dist[far] = 0.0;
            counts[j] = 1;
        }

        std::vector<std::vector<double>> next(k, std::vector<double>(dims, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (auto b : points[i].ones) next[result.assignment[i]][b] += 1.0;
        }
        double max_move = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) {
                next[j] = centroids[j];
                continue;
            }
            double move = 0.0;
            for (std::size_t b = 0; b < dims; ++b) {
                next[j][b] /= static_cast<double>(counts[j]);
                const double d = next[j][b] - centroids[j][b];
                move += d * d;
            }
            max_move = std::max(max_move, std::sqrt(move));
        }
        centroids = std::move(next);
        if (max_move < kMoveTolerance) {
            result.converged = true;
            break;
        }
    }
    std::vector<std::size_t> counts(k, 0);
    for (auto a : result.assignment) ++counts[a];
    for (std::size_t j = 0; j < k; ++j) result.empty[j] = counts[j] == 0;
    return result;
}

// ---------------------------------------------------------------------------
// Merging

std::vector<std::uint32_t> AbstractPath::units(std::size_t layer) const {
    std::vector<std::uint32_t> out;
    out.reserve(layers.at(layer).size());
    for (const auto& wu : layers[layer]) out.push_back(wu.unit);
    return out;
}

std::size_t AbstractPath::neuron_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
}

CriticalPath AbstractPath::as_path() const {
    CriticalPath p;
    for (std::size_t l = 0; l < layers.size(); ++l) p.layers.push_back(units(l));
    return p;
}

AbstractPath merge(std::span<const CriticalPath> members) {
    if (members.empty()) throw InvalidArgument("merge needs at least one member path");
    const std::size_t layer_count = members.front().layers.size();
    AbstractPath out;
    out.layers.resize(layer_count);
    for (std::size_t l = 0; l < layer_count; ++l) {
        std::map<std::uint32_t, std::size_t> counts;
        for (const auto& p : members) {
            if (p.layers.size() != layer_count) throw DimensionError("member paths differ in layer count");
            for (auto u : p.layers[l]) ++counts[u];
        }
        for (const auto& [unit, count] : counts) {
            out.layers[l].push_back({unit, static_cast<double>(count) / static_cast<double>(members.size())});
        }
    }
    return out;
}

AbstractPath filter_beta(const AbstractPath& raw, double beta) {
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in [0, 1), got " + std::to_string(beta));
    AbstractPath out;
    out.beta = beta;
    out.layers.resize(raw.layers.size());
    for (std::size_t l = 0; l < raw.layers.size(); ++l) {
        for (const auto& wu : raw.layers[l]) {
            if (wu.weight > beta) out.layers[l].push_back(wu);
        }
    }
    return out;
}

std::span<const float> Cluster::member_activations(std::size_t member) const {
    const std::size_t width = restricted_size();
    return std::span<const float>(member_acts).subspan(member * width, width);
}

std::size_t DecisionGraph::total_neurons() const noexcept {
    return std::accumulate(layer_sizes.begin(), layer_sizes.end(), std::size_t{0});
}

bool DecisionGraph::class_empty(std::size_t c) const {
    const auto& clusters = classes.at(c);
    return std::all_of(clusters.begin(), clusters.end(), [](const Cluster& cl) { return cl.empty(); });
}

Model model_for_graph(const Model& m, const DecisionGraph& g) {
    if (m.content_hash() != g.model_hash) {
        throw HashMismatchError("decision graph was built for model " + to_hex(g.model_hash) + ", got model " +
                                to_hex(m.content_hash()));
    }
    Model view = m.with_input_layer(g.params.include_input);
    if (view.coverage_layer_count() != g.layer_count()) throw DimensionError("graph layer count does not match model");
    for (std::size_t l = 0; l < g.layer_count(); ++l) {
        if (view.neuron_count(l) != g.layer_sizes[l]) throw DimensionError("graph layer sizes do not match model");
    }
    return view;
}

DecisionGraph build_decision_graph(const Model& model, const LabeledDataset& train, const GraphParams& params) {
    if (!(params.alpha > 0.0 && params.alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
    if (params.k == 0) throw InvalidArgument("k must be at least 1");
    if (!(params.beta >= 0.0 && params.beta < 1.0)) throw InvalidArgument("beta must lie in [0, 1)");
    if (!train.empty() && train.sample_shape != model.input_shape() &&
        shape_numel(train.sample_shape) != shape_numel(model.input_shape())) {
        throw DimensionError("training samples " + shape_str(train.sample_shape) + " do not match model input " +
                             shape_str(model.input_shape()));
    }
    const Model m = model.with_input_layer(params.include_input);
    const LrpOptions lrp{params.lrp_rule, 1e-6};

    std::vector<SampleAnalysis> analyses(train.size());
    parallel_for(train.size(), [&](std::size_t i) { analyses[i] = analyze(m, train.inputs[i], params.alpha, lrp); });

    DecisionGraph g;
    g.model_hash = m.content_hash();
    g.params = params;
    for (std::size_t l = 0; l < m.coverage_layer_count(); ++l) g.layer_sizes.push_back(m.neuron_count(l));
    g.classes.resize(m.class_count());

    std::vector<std::vector<std::size_t>> by_class(m.class_count());
    for (std::size_t i = 0; i < train.size(); ++i) by_class[analyses[i].trace.predicted_class].push_back(i);

    parallel_for(m.class_count(), [&](std::size_t c) {
        auto& clusters = g.classes[c];
        clusters.resize(params.k);
        for (std::size_t j = 0; j < params.k; ++j) {
            clusters[j].class_id = c;
            clusters[j].cluster_id = j;
            clusters[j].abstract.beta = params.beta;
            clusters[j].abstract.layers.resize(m.coverage_layer_count());
        }
        const auto& ids = by_class[c];
        if (ids.empty()) return;
        std::vector<PathVector> vectors;
        vectors.reserve(ids.size());
        for (auto i : ids) vectors.push_back(encode(analyses[i].path, m));
        const auto km = kmeans(vectors, params.k, Rng::stream(params.seed, "clustering", c).next_u64());
        for (std::size_t t = 0; t < ids.size(); ++t) {
            auto& cl = clusters[km.assignment[t]];
            cl.members.push_back(ids[t]);
            cl.member_bits.push_back(vectors[t]);
        }
        for (auto& cl : clusters) {
            if (cl.empty()) continue;
            std::vector<CriticalPath> paths;
            paths.reserve(cl.members.size());
            for (auto i : cl.members) paths.push_back(analyses[i].path);
            cl.abstract = filter_beta(merge(paths), params.beta);
            for (auto i : cl.members) {
                const auto& acts = analyses[i].trace.layers;
                for (std::size_t l = 0; l < cl.abstract.layers.size(); ++l) {
                    for (const auto& wu : cl.abstract.layers[l]) cl.member_acts.push_back(acts[l][wu.unit]);
                }
            }
        }
    });
    return g;
}

double abstract_width(const AbstractPath& p, const DecisionGraph& g) {
    if (g.layer_sizes.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t l = 0; l < g.layer_count(); ++l) {
        acc += static_cast<double>(p.layers.at(l).size()) / static_cast<double>(g.layer_sizes[l]);
    }
    return acc / static_cast<double>(g.layer_count());
}

AbstractMaskResult abstract_mask_eval(const Model& model, const DecisionGraph& g, const LabeledDataset& train,
                                      MaskTarget target) {
    const Model m = model_for_graph(model, g);
    AbstractMaskResult out;
    std::size_t total = 0, changed = 0;
    double width_acc = 0.0;
    for (const auto& clusters : g.classes) {
        for (const auto& cl : clusters) {
            if (cl.empty()) continue;
            const auto path = cl.abstract.as_path();
            const NeuronMask mask = target == MaskTarget::Cdp ? path_mask(path, m) : ncdp(path, m);
            std::vector<std::uint8_t> flips(cl.members.size(), 0);
            parallel_for(cl.members.size(), [&](std::size_t t) {
                const auto& x = train.inputs.at(cl.members[t]);
                flips[t] = predict(m, x, &mask).label != predict(m, x).label ? 1 : 0;
            });
            ClusterInconsistency ci;
            ci.class_id = cl.class_id;
            ci.cluster_id = cl.cluster_id;
            ci.members = cl.members.size();
            ci.changed = static_cast<std::size_t>(std::count(flips.begin(), flips.end(), 1));
            ci.rate = static_cast<double>(ci.changed) / static_cast<double>(ci.members);
            out.clusters.push_back(ci);
            total += ci.members;
            changed += ci.changed;
            width_acc += abstract_width(cl.abstract, g) * static_cast<double>(ci.members);
        }
    }
    if (total > 0) {
        out.overall = static_cast<double>(changed) / static_cast<double>(total);
        out.mean_width = width_acc / static_cast<double>(total);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {
constexpr std::uint32_t kGraphVersion = 1;

const char* rule_name(LrpRule r) { return r == LrpRule::Epsilon ? "epsilon" : "zplus"; }

LrpRule parse_rule(const std::string& s) {
    if (s == "epsilon") return LrpRule::Epsilon;
    if (s == "zplus") return LrpRule::ZPlus;
    throw FormatError("unknown lrp rule '" + s + "'", 16);
}
}  // namespace

Bytes save_graph(const DecisionGraph& g) {
    json body;
    body["model_hash"] = to_hex(g.model_hash);
    body["params"] = {{"alpha", g.params.alpha},   {"k", g.params.k},
                      {"beta", g.params.beta},     {"seed", g.params.seed},
                      {"include_input", g.params.include_input},
                      {"lrp_rule", rule_name(g.params.lrp_rule)}};
    body["layer_sizes"] = g.layer_sizes;
    json classes = json::array();
    for (std::size_t c = 0; c < g.classes.size(); ++c) {
        json clusters = json::array();
        for (const auto& cl : g.classes[c]) {
            json abstract = json::array();
            for (std::size_t l = 0; l < cl.abstract.layers.size(); ++l) {
                json units = json::array(), weights = json::array();
                for (const auto& wu : cl.abstract.layers[l]) {
                    units.push_back(wu.unit);
                    weights.push_back(wu.weight);
                }
                abstract.push_back({{"layer", l}, {"units", units}, {"weights", weights}});
            }
            ByteWriter bits, acts;
            for (const auto& v : cl.member_bits) {
                for (auto w : v.words()) bits.u64(w);
            }
            for (float a : cl.member_acts) acts.f32(a);
            clusters.push_back({{"abstract", abstract},
                                {"members", cl.members},
                                {"member_bits", base64_encode(bits.bytes())},
                                {"member_acts", base64_encode(acts.bytes())}});
        }
        classes.push_back({{"class", c}, {"clusters", clusters}});
    }
    body["classes"] = classes;
    const std::string text = body.dump();

    ByteWriter w;
    w.raw(std::string_view("NPCG"));
    w.u32(kGraphVersion);
    w.u64(text.size());
    w.raw(text);
    return std::move(w).take();
}

DecisionGraph load_graph(std::span<const std::uint8_t> bytes, const Model& model) {
    ByteReader r(bytes);
    if (r.text(4) != "NPCG") throw FormatError("bad magic, expected NPCG", 0);
    const auto version = r.u32();
    if (version != kGraphVersion) throw FormatError("unsupported graph version " + std::to_string(version), 4);
    const auto len = r.u64();
    const auto text = r.text(len);
    if (r.remaining() != 0) throw FormatError("trailing bytes after graph body", r.offset());

    json body;
    try {
        body = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("graph body is not valid JSON: ") + e.what(), 16);
    }

    DecisionGraph g;
    try {
        const auto hash_hex = body.at("model_hash").get<std::string>();
        g.model_hash = std::stoull(hash_hex, nullptr, 16);
        if (g.model_hash != model.content_hash()) {
            throw HashMismatchError("decision graph was built for model " + hash_hex + ", got model " +
                                    to_hex(model.content_hash()));
        }
        const auto& p = body.at("params");
        g.params.alpha = p.at("alpha").get<double>();
        g.params.k = p.at("k").get<std::size_t>();
        g.params.beta = p.at("beta").get<double>();
        g.params.seed = p.value("seed", std::uint64_t{0});
        g.params.include_input = p.value("include_input", false);
        g.params.lrp_rule = parse_rule(p.value("lrp_rule", std::string("epsilon")));

        const Model m = model.with_input_layer(g.params.include_input);
        for (std::size_t l = 0; l < m.coverage_layer_count(); ++l) g.layer_sizes.push_back(m.neuron_count(l));
        if (body.contains("layer_sizes") && body.at("layer_sizes").get<std::vector<std::size_t>>() != g.layer_sizes) {
            throw FormatError("graph layer sizes do not match the model", 16);
        }
        const std::size_t bits = m.total_neurons();
        const std::size_t words = (bits + 63) / 64;

        const auto& classes = body.at("classes");
        if (classes.size() != m.class_count()) throw FormatError("graph class count does not match model", 16);
        g.classes.resize(classes.size());
        for (const auto& jc : classes) {
            const auto c = jc.at("class").get<std::size_t>();
            if (c >= g.classes.size()) throw FormatError("class index out of range", 16);
            const auto& clusters = jc.at("clusters");
            if (clusters.size() != g.params.k) throw FormatError("class does not hold exactly k clusters", 16);
            for (std::size_t j = 0; j < clusters.size(); ++j) {
                const auto& jcl = clusters[j];
                Cluster cl;
                cl.class_id = c;
                cl.cluster_id = j;
                cl.abstract.beta = g.params.beta;
                cl.abstract.layers.resize(g.layer_count());
                for (const auto& ja : jcl.at("abstract")) {
                    const auto l = ja.at("layer").get<std::size_t>();
                    if (l >= g.layer_count()) throw FormatError("abstract layer out of range", 16);
                    const auto units = ja.at("units").get<std::vector<std::uint32_t>>();
                    const auto weights = ja.at("weights").get<std::vector<double>>();
                    if (units.size() != weights.size()) throw FormatError("abstract units/weights length mismatch", 16);
                    for (std::size_t t = 0; t < units.size(); ++t) {
                        if (units[t] >= g.layer_sizes[l]) throw FormatError("abstract unit out of range", 16);
                        cl.abstract.layers[l].push_back({units[t], weights[t]});
                    }
                }
                cl.members = jcl.at("members").get<std::vector<std::size_t>>();
                const Bytes raw_bits = base64_decode(jcl.at("member_bits").get<std::string>());
                if (raw_bits.size() != cl.members.size() * words * 8) throw FormatError("member_bits has the wrong length", 16);
                ByteReader br(raw_bits);
                for (std::size_t t = 0; t < cl.members.size(); ++t) {
                    PathVector v(bits);
                    for (std::size_t w = 0; w < words; ++w) v.words()[w] = br.u64();
                    cl.member_bits.push_back(std::move(v));
                }
                const Bytes raw_acts = base64_decode(jcl.at("member_acts").get<std::string>());
                if (raw_acts.size() != cl.members.size() * cl.restricted_size() * 4) {
                    throw FormatError("member_acts has the wrong length", 16);
                }
                cl.member_acts.resize(raw_acts.size() / 4);
                for (std::size_t t = 0; t < cl.member_acts.size(); ++t) cl.member_acts[t] = load_f32_le(raw_acts.data() + 4 * t);
                g.classes[c].push_back(std::move(cl));
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed graph body: ") + e.what(), 16);
    } catch (const std::invalid_argument&) {
        throw FormatError("model_hash is not hexadecimal", 16);
    }
    return g;
}

DecisionGraph load_graph_file(const std::string& path, const Model& m) { return load_graph(read_file(path), m); }

void save_graph_file(const DecisionGraph& g, const std::string& path) { write_file(path, save_graph(g)); }

}  // namespace npc
