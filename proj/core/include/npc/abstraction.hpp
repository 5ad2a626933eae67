#pragma once

#include "npc/bytes.hpp"
#include "npc/cdp.hpp"
#include "npc/dataset.hpp"
#include "npc/lrp.hpp"
#include "npc/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace npc {

/// CDP membership bits over all coverage neurons, layers ascending then units
/// ascending. Stored as little-endian 64-bit words.
class PathVector {
public:
    PathVector() = default;
    explicit PathVector(std::size_t bits) : words_((bits + 63) / 64, 0), bits_(bits) {}

    std::size_t bits() const noexcept { return bits_; }
    bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
    void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
    std::size_t popcount() const noexcept;

    const std::vector<std::uint64_t>& words() const noexcept { return words_; }
    std::vector<std::uint64_t>& words() noexcept { return words_; }

    friend bool operator==(const PathVector&, const PathVector&) = default;

private:
    std::vector<std::uint64_t> words_;
    std::size_t bits_ = 0;
};

PathVector encode(const CriticalPath& p, const Model& m);
CriticalPath decode(const PathVector& v, const Model& m);

struct KMeansResult {
    std::vector<std::size_t> assignment;
    std::vector<std::vector<double>> centroids;
    std::vector<bool> empty;  // clusters left without members
    std::size_t iterations = 0;
    bool converged = false;
};

/// Lloyd's k-means on 0/1 vectors under squared Euclidean distance.
///
/// k-means++ seeding from the given seed; iterates until the largest centroid
/// move is below 1e-6 or 100 rounds. An emptied cluster is reseeded with the
/// point farthest from its own centroid. With fewer points than k the surplus
/// clusters stay empty and are flagged.
KMeansResult kmeans(std::span<const PathVector> vectors, std::size_t k, std::uint64_t seed);

struct WeightedUnit {
    std::uint32_t unit = 0;
    double weight = 0.0;

    friend bool operator==(const WeightedUnit&, const WeightedUnit&) = default;
};

/// Merged CDP of a cluster: per layer, units with their member fraction.
struct AbstractPath {
    std::vector<std::vector<WeightedUnit>> layers;
    double beta = 0.0;

    std::vector<std::uint32_t> units(std::size_t layer) const;
    std::size_t neuron_count() const noexcept;
    bool empty() const noexcept { return neuron_count() == 0; }
    /// Per-layer unit sets as a CriticalPath, for masking and similarity.
    CriticalPath as_path() const;

    friend bool operator==(const AbstractPath&, const AbstractPath&) = default;
};

/// Per-layer union of member CDPs, weight = fraction of members containing the unit.
AbstractPath merge(std::span<const CriticalPath> members);

/// Keeps units whose weight is strictly greater than beta.
AbstractPath filter_beta(const AbstractPath& raw, double beta);

struct Cluster {
    std::size_t class_id = 0;
    std::size_t cluster_id = 0;
    std::vector<std::size_t> members;        // training-set indices, ascending
    std::vector<PathVector> member_bits;     // aligned with members
    /// Activations at the abstract units: member-major, then layer, then unit.
    std::vector<float> member_acts;
    AbstractPath abstract;

    bool empty() const noexcept { return members.empty(); }
    std::size_t restricted_size() const noexcept { return abstract.neuron_count(); }
    std::span<const float> member_activations(std::size_t member) const;
};

struct GraphParams {
    double alpha = 0.8;
    std::size_t k = 4;
    double beta = 0.8;
    std::uint64_t seed = 0;
    bool include_input = false;
    LrpRule lrp_rule = LrpRule::Epsilon;
};

struct DecisionGraph {
    std::uint64_t model_hash = 0;
    GraphParams params;
    std::vector<std::size_t> layer_sizes;       // neurons per coverage layer
    std::vector<std::vector<Cluster>> classes;  // exactly k clusters per class

    std::size_t class_count() const noexcept { return classes.size(); }
    std::size_t layer_count() const noexcept { return layer_sizes.size(); }
    std::size_t total_neurons() const noexcept;
    bool class_empty(std::size_t c) const;
};

/// Groups training samples by predicted class, clusters their CDPs per class,
/// merges and beta-filters each cluster, and caches member activations.
DecisionGraph build_decision_graph(const Model& m, const LabeledDataset& train, const GraphParams& params);

/// Mean over layers of |abstract_l| / neuron_count(l).
double abstract_width(const AbstractPath& p, const DecisionGraph& g);

struct ClusterInconsistency {
    std::size_t class_id = 0;
    std::size_t cluster_id = 0;
    std::size_t members = 0;
    std::size_t changed = 0;
    double rate = 0.0;
};

struct AbstractMaskResult {
    std::vector<ClusterInconsistency> clusters;
    double overall = 0.0;     // pooled over all members
    double mean_width = 0.0;  // member-weighted abstract width
};

/// Masks each cluster's abstract path (or its complement) identically for all
/// of the cluster's members and reports how many predictions change.
AbstractMaskResult abstract_mask_eval(const Model& m, const DecisionGraph& g, const LabeledDataset& train,
                                      MaskTarget target);

/// .npcg container: "NPCG", u32 version, u64 JSON length, UTF-8 JSON body.
Bytes save_graph(const DecisionGraph& g);
/// Rejects graphs whose recorded model hash differs from the model's.
DecisionGraph load_graph(std::span<const std::uint8_t> bytes, const Model& m);

DecisionGraph load_graph_file(const std::string& path, const Model& m);
void save_graph_file(const DecisionGraph& g, const std::string& path);

/// Model view matching the graph's neuron-granularity flags.
Model model_for_graph(const Model& m, const DecisionGraph& g);

}  // namespace npc
