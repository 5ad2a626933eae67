#pragma once

#include "npc/abstraction.hpp"
#include "npc/cdp.hpp"
#include "npc/model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace npc {

enum class Criterion { Snpc, Anpc };

const char* criterion_name(Criterion c) noexcept;
Criterion parse_criterion(const std::string& name);

struct CoverageConfig {
    std::size_t m = 200;  // buckets per (class, cluster, layer)
    double u = 2.0;       // ANPC distance bound
};

/// One coverage cell. bucket is 1-based.
struct Cell {
    std::size_t class_id = 0;
    std::size_t cluster_id = 0;
    std::size_t layer = 0;
    std::size_t bucket = 1;

    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Cells produced by one input, before they are merged into a state.
struct CellBatch {
    std::vector<Cell> cells;
    std::size_t clamped = 0;  // ANPC distances above the bound
    std::size_t predicted_class = 0;
};

/// Covered-cell set over n * k * L * m cells.
class CoverageState {
public:
    CoverageState(const DecisionGraph& g, Criterion criterion, CoverageConfig config = {});

    Criterion criterion() const noexcept { return criterion_; }
    const CoverageConfig& config() const noexcept { return config_; }
    const DecisionGraph& graph() const noexcept { return *graph_; }

    std::size_t cells_total() const noexcept { return total_; }
    std::size_t cells_covered() const noexcept { return covered_; }
    std::size_t class_cells_covered(std::size_t c) const { return per_class_.at(c); }
    std::size_t class_cells_total() const noexcept { return total_ / std::max<std::size_t>(1, classes_); }
    /// Number of distance observations clamped to bucket m so far.
    std::size_t clamped_count() const noexcept { return clamped_; }

    bool contains(const Cell& c) const;
    /// Returns true when the cell was not covered before.
    bool insert(const Cell& c);
    /// Inserts a batch and returns the newly covered cells.
    std::vector<Cell> insert(const CellBatch& batch);
    /// Set union with another state over the same graph and settings.
    void merge(const CoverageState& other);
    /// Covered cells in (class, cluster, layer, bucket) order.
    std::vector<Cell> cells() const;

private:
    std::size_t index_of(const Cell& c) const;

    const DecisionGraph* graph_;
    Criterion criterion_;
    CoverageConfig config_;
    std::size_t classes_ = 0, clusters_ = 0, layers_ = 0;
    std::size_t total_ = 0, covered_ = 0, clamped_ = 0;
    std::vector<std::uint64_t> bits_;
    std::vector<std::size_t> per_class_;
};

/// Bucket of a Jaccard ratio inter/uni: i with J in ((i-1)/m, i/m]; J = 0 maps
/// to 1. uni = 0 (two empty sets) counts as J = 1.
std::size_t jaccard_bucket(std::size_t inter, std::size_t uni, std::size_t m);

/// Bucket of a distance: i with D in (U(i-1)/m, U*i/m]; D = 0 maps to 1 and
/// D > U is clamped to m with *clamped set.
std::size_t distance_bucket(double d, double u, std::size_t m, bool* clamped = nullptr);

/// Index into the cluster's member list of the member whose CDP is most similar
/// to p (ties: lowest member id). Empty cluster yields nullopt.
std::optional<std::size_t> nearest_member(const DecisionGraph& g, std::size_t class_id, std::size_t cluster_id,
                                          const CriticalPath& p);

/// Pure per-input cell computation. `view` must be model_for_graph(m, g).
CellBatch snpc_cells(const Model& view, const DecisionGraph& g, const Tensor& x, const CoverageConfig& cfg);
CellBatch anpc_cells(const Model& view, const DecisionGraph& g, const Tensor& x, const CoverageConfig& cfg);

std::vector<Cell> snpc_update(CoverageState& state, const Model& m, const DecisionGraph& g, const Tensor& x);
std::vector<Cell> anpc_update(CoverageState& state, const Model& m, const DecisionGraph& g, const Tensor& x);

/// Covers a whole suite, computing cells in parallel and merging in order.
void cover_suite(CoverageState& state, const Model& m, std::span<const Tensor> suite);

double coverage(const CoverageState& state) noexcept;

/// {criterion, m, u, cells_covered, cells_total, ratio, clamped_count, per_class}.
std::string coverage_report_json(const CoverageState& state);

}  // namespace npc
