#include "fixture.hpp"
#include "oracles.hpp"

#include "npc/error.hpp"
#include "npc/metrics.hpp"
#include "npc/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace npc {
namespace {

TEST(Impartiality, Extremes) {
    std::vector<std::size_t> uniform;
    for (std::size_t i = 0; i < 100; ++i) uniform.push_back(i % 10);
    EXPECT_EQ(output_impartiality(uniform, 10), 1.0);
    EXPECT_EQ(output_impartiality(std::vector<std::size_t>(20, 3), 10), 0.0);
}

TEST(Impartiality, TwoThirdsOneThird) {
    const std::vector<std::size_t> p{0, 0, 1};
    EXPECT_NEAR(output_impartiality(p, 2), oracle::entropy_ratio({2.0 / 3.0, 1.0 / 3.0}), 1e-12);
    EXPECT_NEAR(output_impartiality(p, 2), 0.9183, 1e-4);
}

TEST(Impartiality, PermutationAndRelabelInvariant) {
    Rng rng(1);
    std::vector<std::size_t> p;
    for (int i = 0; i < 50; ++i) p.push_back(rng.index(4));
    const double base = output_impartiality(p, 4);
    auto q = p;
    rng.shuffle(q);
    EXPECT_DOUBLE_EQ(output_impartiality(q, 4), base);
    for (auto& v : q) v = (v + 1) % 4;
    EXPECT_NEAR(output_impartiality(q, 4), base, 1e-15);
}

TEST(Impartiality, Errors) {
    EXPECT_THROW(output_impartiality(std::vector<std::size_t>{0}, 1), InvalidArgument);
    EXPECT_THROW(output_impartiality(std::vector<std::size_t>{}, 2), InvalidArgument);
}

TEST(CoverageChange, Examples) {
    auto r = normalized_coverage_change(std::vector<double>{0.2, 0.7, 1.2}, 0.2);
    ASSERT_FALSE(r.degenerate);
    EXPECT_NEAR(r.values[0], 0.0, 1e-12);
    EXPECT_NEAR(r.values[1], 0.5, 1e-12);
    EXPECT_NEAR(r.values[2], 1.0, 1e-12);

    r = normalized_coverage_change(std::vector<double>{0.3, 0.8}, 0.5);
    EXPECT_NEAR(r.values[0], -0.4, 1e-12);
    EXPECT_NEAR(r.values[1], 0.6, 1e-12);
    EXPECT_NEAR(r.values[1] - r.values[0], 1.0, 1e-12);

    EXPECT_TRUE(normalized_coverage_change(std::vector<double>{0.4, 0.4, 0.4}, 0.4).degenerate);
}

TEST(ErrorSuites, CountsAndDeterminism) {
    std::vector<Tensor> base, errors;
    for (int i = 0; i < 1000; ++i) base.push_back(Tensor::vector({static_cast<float>(i)}));
    for (int i = 0; i < 150; ++i) errors.push_back(Tensor::vector({-1.0f - static_cast<float>(i)}));
    const std::vector<double> fr{0.0, 0.01, 0.05, 0.1};
    const auto s = error_sensitivity_suites(base, errors, fr, 2, 7);
    ASSERT_EQ(s.size(), 8u);
    EXPECT_EQ(s[0].inputs, base);
    EXPECT_EQ(s[3].replaced, 100u);
    for (const auto& suite : s) {
        EXPECT_EQ(suite.inputs.size(), base.size());
        const auto n = std::count_if(suite.inputs.begin(), suite.inputs.end(), [](const Tensor& t) { return t[0] < 0; });
        EXPECT_EQ(static_cast<std::size_t>(n), suite.replaced);
    }
    // nested within a repeat
    for (std::size_t i = 0; i < s[2].base_positions.size(); ++i) EXPECT_EQ(s[3].base_positions[i], s[2].base_positions[i]);
    const auto again = error_sensitivity_suites(base, errors, fr, 2, 7);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(again[i].inputs, s[i].inputs);
    EXPECT_NE(s[3].base_positions, s[7].base_positions);
}

TEST(ErrorSuites, ShortfallIsNamed) {
    std::vector<Tensor> base(100, Tensor::vector({0})), errors(3, Tensor::vector({1}));
    try {
        error_sensitivity_suites(base, errors, std::vector<double>{0.05}, 1, 0);
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("short by 2"), std::string::npos) << e.what();
    }
}

TEST(Correlation, PearsonAndSpearman) {
    const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, z{1, 4, 9, 16, 25}, w{5, 4, 3, 2, 1};
    EXPECT_NEAR(pearson(x, y), 1.0, 1e-12);
    EXPECT_NEAR(pearson(x, w), -1.0, 1e-12);
    EXPECT_LT(pearson(x, z), 1.0);
    EXPECT_NEAR(spearman(x, z), 1.0, 1e-12);
    const std::vector<double> ties{1, 1, 2, 2}, other{1, 2, 3, 4};
    EXPECT_NEAR(spearman(ties, other), pearson(std::vector<double>{1.5, 1.5, 3.5, 3.5}, other), 1e-12);
}

TEST(Csv, Rows) {
    const std::vector<SuiteRow> rows{{"a", 0.5, 1.0}};
    EXPECT_EQ(suite_rows_csv(rows), "suite,coverage,impartiality\na,0.5,1\n");
}

TEST(Tune, RecommendRespectsWidthCap) {
    const std::vector<TuneRow> rows{{0.7, 0, 0, 0.3, 0.8, 0.1}, {0.9, 0, 0, 0.45, 0.95, 0.05}, {1.0, 0, 0, 0.6, 1.0, 0.0}};
    EXPECT_EQ(recommend(rows, 0.5), 1u);
    EXPECT_EQ(recommend(rows, 0.2), rows.size());
}

TEST(Similarity, IdenticalPathsGiveOne) {
    CriticalPath p;
    p.layers = {{1, 2}, {0}};
    const std::vector<CriticalPath> paths(6, p);
    const std::vector<std::size_t> cls{0, 0, 0, 1, 1, 1}, clu{0, 0, 1, 0, 1, 1};
    const auto r = pair_similarity(paths, cls, clu);
    EXPECT_EQ(r.intra_class, 1.0);
    EXPECT_EQ(r.inter_class, 1.0);
    EXPECT_EQ(r.intra_cluster, 1.0);
    EXPECT_EQ(r.inter_cluster, 1.0);
    EXPECT_TRUE(r.complete());
}

TEST(Similarity, InsufficientSamplesFlagged) {
    CriticalPath p;
    p.layers = {{1}};
    const std::vector<CriticalPath> paths(2, p);
    const std::vector<std::size_t> cls{0, 0};
    const auto r = pair_similarity(paths, cls);
    EXPECT_FALSE(r.complete());
}

TEST(Similarity, AgreesWithBruteForcePairs) {
    const auto f = testing::blobs_fixture(2);
    std::vector<CriticalPath> paths;
    std::vector<std::size_t> cls, clu;
    for (std::size_t i = 0; i < 20; ++i) {
        const auto a = analyze(f.model, f.test.inputs[i], 0.7);
        paths.push_back(a.path);
        cls.push_back(a.trace.predicted_class);
        clu.push_back(i % 2);
    }
    double ic = 0, xc = 0, iu = 0, xu = 0;
    int nic = 0, nxc = 0, niu = 0, nxu = 0;
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 20; ++j) {
            if (i >= j) continue;
            const double s = oracle::path_similarity(paths[i].layers, paths[j].layers);
            if (cls[i] != cls[j]) {
                xc += s, ++nxc;
            } else {
                ic += s, ++nic;
                if (clu[i] == clu[j]) iu += s, ++niu;
                else xu += s, ++nxu;
            }
        }
    const auto r = pair_similarity(paths, cls, clu);
    EXPECT_NEAR(r.intra_class, ic / nic, 1e-12);
    EXPECT_NEAR(r.inter_class, xc / nxc, 1e-12);
    EXPECT_NEAR(r.intra_cluster, iu / niu, 1e-12);
    EXPECT_NEAR(r.inter_cluster, xu / nxu, 1e-12);
}

TEST(Similarity, GraphStatsCapAndSeed) {
    const auto f = testing::blobs_fixture(2);
    const auto g = build_decision_graph(f.model, f.train, {});
    std::vector<CriticalPath> paths;
    for (const auto& x : f.train.inputs) paths.push_back(analyze(f.model, x, g.params.alpha).path);
    const auto a = similarity_stats(g, paths, 30, 1), b = similarity_stats(g, paths, 30, 1);
    EXPECT_EQ(a.intra_class, b.intra_class);
    EXPECT_EQ(a.intra_class_pairs, 3u * 30 * 29 / 2);
    EXPECT_EQ(a.inter_class_pairs, 3u * 30 * 30);
    EXPECT_EQ(a.intra_cluster_pairs + a.inter_cluster_pairs, a.intra_class_pairs);
}

}  // namespace
}  // namespace npc
