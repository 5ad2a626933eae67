#pragma once

#include "npc/abstraction.hpp"
#include "npc/cdp.hpp"
#include "npc/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace npc {

struct SimilarityReport {
    double intra_class = 0.0;
    double inter_class = 0.0;
    double intra_cluster = 0.0;
    double inter_cluster = 0.0;  // different clusters of the same class
    std::size_t intra_class_pairs = 0;
    std::size_t inter_class_pairs = 0;
    std::size_t intra_cluster_pairs = 0;
    std::size_t inter_cluster_pairs = 0;
    std::vector<std::string> flags;  // set when some mean had no pairs

    bool complete() const noexcept { return flags.empty(); }
};

/// Pair means over all distinct pairs. clusters may be empty, which leaves the
/// cluster means unset.
SimilarityReport pair_similarity(std::span<const CriticalPath> paths, std::span<const std::size_t> classes,
                                 std::span<const std::size_t> clusters = {});

/// Similarity of training CDPs grouped by the graph's classes and clusters.
/// paths[i] is the CDP of training sample i. At most cap members per class
/// are drawn, from the ("similarity", class) stream.
SimilarityReport similarity_stats(const DecisionGraph& g, std::span<const CriticalPath> paths, std::size_t cap = 100,
                                  std::uint64_t seed = 0);

std::string similarity_report_json(const SimilarityReport& r);

/// Entropy of the predicted-class distribution divided by ln(class_count).
double output_impartiality(std::span<const std::size_t> predicted, std::size_t class_count);

struct NormalizedChange {
    std::vector<double> values;
    std::vector<double> deltas;
    bool degenerate = false;  // max delta == min delta; values left empty
};

/// (cov[s] - baseline) / (max delta - min delta) over the given suites.
NormalizedChange normalized_coverage_change(std::span<const double> cov, double baseline);

struct ErrorSuite {
    double fraction = 0.0;
    std::size_t repeat = 0;
    std::size_t replaced = 0;
    std::vector<std::size_t> base_positions;   // replaced slots in the base suite
    std::vector<std::size_t> error_indices;    // errors placed in those slots
    std::vector<Tensor> inputs;
};

/// Equal-size suites in which round(fraction * |base|) base inputs are replaced
/// by errors. Within a repeat the suites are nested: one shuffle of base slots
/// and one of errors, prefixes taken per fraction.
std::vector<ErrorSuite> error_sensitivity_suites(std::span<const Tensor> base, std::span<const Tensor> errors,
                                                 std::span<const double> fractions, std::size_t repeats,
                                                 std::uint64_t seed);

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson on average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct SuiteRow {
    std::string suite;
    double coverage = 0.0;
    double impartiality = 0.0;
};

std::string suite_rows_csv(std::span<const SuiteRow> rows);

struct TuneRow {
    double alpha = 0.0;
    std::size_t k = 0;    // 0 for per-sample CDP rows
    double beta = 0.0;
    double width = 0.0;
    double inc_c = 0.0;
    double inc_nc = 0.0;
};

/// Row maximizing inc_c - inc_nc among rows with width <= cap; ties keep the
/// earlier row. Returns rows.size() when none qualifies.
std::size_t recommend(std::span<const TuneRow> rows, double width_cap = 0.5);

}  // namespace npc
