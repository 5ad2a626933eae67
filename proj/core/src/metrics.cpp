#include "npc/metrics.hpp"

#include "npc/error.hpp"
#include "npc/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace npc {

SimilarityReport pair_similarity(std::span<const CriticalPath> paths, std::span<const std::size_t> classes,
                                 std::span<const std::size_t> clusters) {
    if (paths.size() != classes.size() || (!clusters.empty() && clusters.size() != paths.size())) {
        throw DimensionError("paths, classes and clusters must align");
    }
    SimilarityReport r;
    double ic = 0, xc = 0, iu = 0, xu = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        for (std::size_t j = i + 1; j < paths.size(); ++j) {
            const double s = path_similarity(paths[i], paths[j]);
            if (classes[i] != classes[j]) {
                xc += s;
                ++r.inter_class_pairs;
                continue;
            }
            ic += s;
            ++r.intra_class_pairs;
            if (clusters.empty()) continue;
            if (clusters[i] == clusters[j]) {
                iu += s;
                ++r.intra_cluster_pairs;
            } else {
                xu += s;
                ++r.inter_cluster_pairs;
            }
        }
    }
    auto mean = [&](double sum, std::size_t n, const char* name) {
        if (n == 0) {
            r.flags.push_back(std::string("no pairs for ") + name);
            return 0.0;
        }
        return sum / static_cast<double>(n);
    };
    r.intra_class = mean(ic, r.intra_class_pairs, "intra_class");
    r.inter_class = mean(xc, r.inter_class_pairs, "inter_class");
    if (!clusters.empty()) {
        r.intra_cluster = mean(iu, r.intra_cluster_pairs, "intra_cluster");
        r.inter_cluster = mean(xu, r.inter_cluster_pairs, "inter_cluster");
    }
    return r;
}

SimilarityReport similarity_stats(const DecisionGraph& g, std::span<const CriticalPath> paths, std::size_t cap,
                                  std::uint64_t seed) {
    if (cap == 0) throw InvalidArgument("sampling cap must be positive");
    std::vector<CriticalPath> picked;
    std::vector<std::size_t> classes, clusters;
    for (std::size_t c = 0; c < g.class_count(); ++c) {
        std::vector<std::pair<std::size_t, std::size_t>> members;  // (sample, cluster)
        for (const auto& cl : g.classes[c]) {
            for (auto s : cl.members) members.emplace_back(s, cl.cluster_id);
        }
        std::sort(members.begin(), members.end());
        if (members.size() > cap) {
            auto rng = Rng::stream(seed, "similarity", c);
            rng.shuffle(members);
            members.resize(cap);
            std::sort(members.begin(), members.end());
        }
        for (const auto& [s, cl] : members) {
            if (s >= paths.size()) throw DimensionError("graph member " + std::to_string(s) + " has no path");
            picked.push_back(paths[s]);
            classes.push_back(c);
            clusters.push_back(cl);
        }
    }
    return pair_similarity(picked, classes, clusters);
}

std::string similarity_report_json(const SimilarityReport& r) {
    nlohmann::json j = {{"intra_class", r.intra_class},
                        {"inter_class", r.inter_class},
                        {"intra_cluster", r.intra_cluster},
                        {"inter_cluster", r.inter_cluster},
                        {"pairs",
                         {{"intra_class", r.intra_class_pairs},
                          {"inter_class", r.inter_class_pairs},
                          {"intra_cluster", r.intra_cluster_pairs},
                          {"inter_cluster", r.inter_cluster_pairs}}},
                        {"flags", r.flags}};
    return j.dump(2);
}

double output_impartiality(std::span<const std::size_t> predicted, std::size_t class_count) {
    if (class_count < 2) throw InvalidArgument("impartiality needs at least two classes");
    if (predicted.empty()) throw InvalidArgument("impartiality needs at least one prediction");
    std::vector<std::size_t> counts(class_count, 0);
    for (auto p : predicted) {
        if (p >= class_count) throw InvalidArgument("predicted class " + std::to_string(p) + " out of range");
        ++counts[p];
    }
    if (std::all_of(counts.begin(), counts.end(), [&](std::size_t c) { return c == counts[0]; })) return 1.0;
    const double n = static_cast<double>(predicted.size());
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    if (h == 0.0) return 0.0;
    return std::min(1.0, h / std::log(static_cast<double>(class_count)));
}

NormalizedChange normalized_coverage_change(std::span<const double> cov, double baseline) {
    if (cov.size() < 2) throw InvalidArgument("normalized coverage change needs at least two suites");
    NormalizedChange out;
    for (double c : cov) out.deltas.push_back(c - baseline);
    const auto [lo, hi] = std::minmax_element(out.deltas.begin(), out.deltas.end());
    const double range = *hi - *lo;
    if (range == 0.0) {
        out.degenerate = true;
        return out;
    }
    for (double d : out.deltas) out.values.push_back(d / range);
    return out;
}

std::vector<ErrorSuite> error_sensitivity_suites(std::span<const Tensor> base, std::span<const Tensor> errors,
                                                 std::span<const double> fractions, std::size_t repeats,
                                                 std::uint64_t seed) {
    if (base.empty()) throw InvalidArgument("error suites need a nonempty base suite");
    std::vector<std::size_t> counts;
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("error fraction must lie in [0, 1]");
        const auto n = static_cast<std::size_t>(std::llround(f * static_cast<double>(base.size())));
        if (n > errors.size()) {
            throw InvalidArgument("fraction " + std::to_string(f) + " needs " + std::to_string(n) + " errors, only " +
                                  std::to_string(errors.size()) + " available (short by " +
                                  std::to_string(n - errors.size()) + ")");
        }
        counts.push_back(n);
    }
    std::vector<ErrorSuite> out;
    for (std::size_t r = 0; r < repeats; ++r) {
        std::vector<std::size_t> slots(base.size()), picks(errors.size());
        std::iota(slots.begin(), slots.end(), 0);
        std::iota(picks.begin(), picks.end(), 0);
        Rng::stream(seed, "suites.base", r).shuffle(slots);
        Rng::stream(seed, "suites.errors", r).shuffle(picks);
        for (std::size_t f = 0; f < fractions.size(); ++f) {
            ErrorSuite s;
            s.fraction = fractions[f];
            s.repeat = r;
            s.replaced = counts[f];
            s.inputs.assign(base.begin(), base.end());
            for (std::size_t t = 0; t < counts[f]; ++t) {
                s.base_positions.push_back(slots[t]);
                s.error_indices.push_back(picks[t]);
                s.inputs[slots[t]] = errors[picks[t]];
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("correlation needs two equal-length series of size >= 2");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nan("");
    return sxy / std::sqrt(sxx * syy);
}

namespace {
std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
        i = j + 1;
    }
    return r;
}
}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InvalidArgument("correlation needs equal-length series");
    const auto rx = ranks(x), ry = ranks(y);
    return pearson(rx, ry);
}

std::string suite_rows_csv(std::span<const SuiteRow> rows) {
    std::ostringstream os;
    os.precision(17);
    os << "suite,coverage,impartiality\n";
    for (const auto& r : rows) os << r.suite << ',' << r.coverage << ',' << r.impartiality << '\n';
    return os.str();
}

std::size_t recommend(std::span<const TuneRow> rows, double width_cap) {
    std::size_t best = rows.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].width > width_cap) continue;
        if (best == rows.size() || rows[i].inc_c - rows[i].inc_nc > rows[best].inc_c - rows[best].inc_nc) best = i;
    }
    return best;
}

}  // namespace npc
