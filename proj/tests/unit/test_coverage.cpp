#include "fixture.hpp"
#include "oracles.hpp"

#include "npc/coverage.hpp"
#include "npc/error.hpp"
#include "npc/rng.hpp"
#include "npc/trainkit.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace npc {
namespace {

TEST(Buckets, JaccardEdges) {
    EXPECT_EQ(jaccard_bucket(5, 5, 200), 200u);
    EXPECT_EQ(jaccard_bucket(0, 5, 200), 1u);
    EXPECT_EQ(jaccard_bucket(0, 0, 10), 10u);
    EXPECT_EQ(jaccard_bucket(1, 10, 10), 1u);  // J = 0.1 is the right end of bucket 1
    EXPECT_EQ(jaccard_bucket(2, 10, 10), 2u);
}

TEST(Buckets, JaccardAgreesWithScan) {
    for (std::size_t m : {1u, 3u, 7u, 10u, 200u})
        for (std::size_t uni = 1; uni <= 40; ++uni)
            for (std::size_t inter = 0; inter <= uni; ++inter)
                EXPECT_EQ(jaccard_bucket(inter, uni, m), oracle::scan_jaccard_bucket(inter, uni, m))
                    << inter << "/" << uni << " m=" << m;
}

TEST(Buckets, DistanceEdges) {
    bool clamped = true;
    EXPECT_EQ(distance_bucket(0.0, 2.0, 200, &clamped), 1u);
    EXPECT_FALSE(clamped);
    EXPECT_EQ(distance_bucket(2.0, 2.0, 200, &clamped), 200u);
    EXPECT_FALSE(clamped);
    EXPECT_EQ(distance_bucket(5.0, 2.0, 200, &clamped), 200u);
    EXPECT_TRUE(clamped);
    EXPECT_EQ(distance_bucket(0.5, 2.0, 4), 1u);
    EXPECT_EQ(distance_bucket(0.5000001, 2.0, 4), 2u);
    EXPECT_THROW(distance_bucket(-1.0, 2.0, 4), InvalidArgument);
}

TEST(Buckets, DistanceAgreesWithScan) {
    Rng rng(3);
    for (int i = 0; i < 5000; ++i) {
        const double d = rng.uniform(0.0, 2.5);
        EXPECT_EQ(distance_bucket(d, 2.0, 200), oracle::scan_bucket(d, 2.0, 200)) << d;
    }
}

// Two-class fixture: 2-8-8-2 network, two coverage layers.
struct TwoClass {
    Model model;
    LabeledDataset train;
    DecisionGraph graph;
};

TwoClass two_class(std::size_t k) {
    BlobsConfig b;
    b.classes = 2;
    b.samples_per_class = 60;
    b.seed = 8;
    auto train = make_blobs(b);
    TrainConfig cfg;
    cfg.seed = 8;
    auto model = train_sgd(Architecture::mlp(2, {8, 8}, 2), train, cfg).model;
    GraphParams p;
    p.k = k;
    auto g = build_decision_graph(model, train, p);
    return {std::move(model), std::move(train), std::move(g)};
}

TEST(Snpc, OneInputCoversOneBucketPerLayer) {
    const auto t = two_class(1);
    CoverageState s(t.graph, Criterion::Snpc, {10, 2.0});
    EXPECT_EQ(s.cells_total(), 40u);
    EXPECT_EQ(coverage(s), 0.0);
    const auto fresh = snpc_update(s, t.model, t.graph, t.train.inputs[0]);
    EXPECT_EQ(fresh.size(), 2u);
    EXPECT_DOUBLE_EQ(coverage(s), 0.05);
    EXPECT_TRUE(snpc_update(s, t.model, t.graph, t.train.inputs[0]).empty());
    EXPECT_DOUBLE_EQ(coverage(s), 0.05);
}

TEST(Snpc, FullStateIsOne) {
    const auto t = two_class(2);
    CoverageState s(t.graph, Criterion::Snpc, {3, 2.0});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t l = 0; l < 2; ++l)
                for (std::size_t b = 1; b <= 3; ++b) s.insert(Cell{c, j, l, b});
    EXPECT_DOUBLE_EQ(coverage(s), 1.0);
    EXPECT_THROW(s.insert(Cell{0, 0, 0, 4}), InvalidArgument);
    EXPECT_THROW(s.insert(Cell{0, 0, 0, 0}), InvalidArgument);
}

TEST(Snpc, CriterionAndGraphMismatch) {
    const auto t = two_class(1);
    CoverageState s(t.graph, Criterion::Anpc);
    EXPECT_THROW(snpc_update(s, t.model, t.graph, t.train.inputs[0]), InvalidArgument);
    const auto other = testing::blobs_fixture(1);
    CoverageState s2(t.graph, Criterion::Snpc);
    EXPECT_THROW(snpc_update(s2, other.model, t.graph, other.train.inputs[0]), Error);
}

class FixtureCoverage : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fixture_ = new testing::Fixture(testing::blobs_fixture(5));
        graph_ = new DecisionGraph(build_decision_graph(fixture_->model, fixture_->train, {}));
    }
    static void TearDownTestSuite() {
        delete graph_;
        delete fixture_;
    }
    static testing::Fixture* fixture_;
    static DecisionGraph* graph_;
};
testing::Fixture* FixtureCoverage::fixture_ = nullptr;
DecisionGraph* FixtureCoverage::graph_ = nullptr;

TEST_F(FixtureCoverage, NearestMemberMatchesBruteForce) {
    const auto& f = *fixture_;
    const auto& g = *graph_;
    for (std::size_t i = 0; i < 60; ++i) {
        const auto a = analyze(f.model, f.test.inputs[i], g.params.alpha);
        for (const auto& cl : g.classes[a.trace.predicted_class]) {
            const auto got = nearest_member(g, cl.class_id, cl.cluster_id, a.path);
            if (cl.empty()) {
                EXPECT_FALSE(got.has_value());
                continue;
            }
            std::size_t best = 0;
            double best_s = -1;
            for (std::size_t t = 0; t < cl.members.size(); ++t) {
                const auto mp = analyze(f.model, f.train.inputs[cl.members[t]], g.params.alpha).path;
                const double s = oracle::path_similarity(a.path.layers, mp.layers);
                if (s > best_s + 1e-12) best_s = s, best = t;
            }
            ASSERT_TRUE(got.has_value());
            EXPECT_EQ(*got, best);
        }
    }
}

TEST_F(FixtureCoverage, NearestMemberOfMemberHasSimilarityOne) {
    const auto& f = *fixture_;
    const auto& g = *graph_;
    for (const auto& cl : g.classes[0]) {
        for (std::size_t t = 0; t < std::min<std::size_t>(cl.members.size(), 10); ++t) {
            const auto p = analyze(f.model, f.train.inputs[cl.members[t]], g.params.alpha).path;
            const auto n = nearest_member(g, cl.class_id, cl.cluster_id, p);
            ASSERT_TRUE(n.has_value());
            EXPECT_LE(*n, t);
            EXPECT_EQ(cl.member_bits[*n], cl.member_bits[t]);
        }
    }
}

TEST_F(FixtureCoverage, TrainingSuiteCoversBucketOneEverywhere) {
    const auto& f = *fixture_;
    const auto& g = *graph_;
    CoverageState s(g, Criterion::Anpc);
    cover_suite(s, f.model, f.train.inputs);
    for (const auto& cls : g.classes)
        for (const auto& cl : cls) {
            if (cl.empty()) continue;
            for (std::size_t l = 0; l < g.layer_count(); ++l)
                EXPECT_TRUE(s.contains(Cell{cl.class_id, cl.cluster_id, l, 1}));
        }
}

TEST_F(FixtureCoverage, CellsAgreeWithRecomputationFromRawTraces) {
    const auto& f = *fixture_;
    const auto& g = *graph_;
    const CoverageConfig cfg{};
    for (std::size_t i = 0; i < 50; ++i) {
        const auto& x = f.test.inputs[i];
        const auto a = analyze(f.model, x, g.params.alpha);
        std::set<Cell> snpc_want, anpc_want;
        for (const auto& cl : g.classes[a.trace.predicted_class]) {
            if (cl.empty()) continue;
            std::size_t best = 0;
            double best_s = -1;
            for (std::size_t t = 0; t < cl.members.size(); ++t) {
                const auto mp = analyze(f.model, f.train.inputs[cl.members[t]], g.params.alpha).path;
                const double s = oracle::path_similarity(a.path.layers, mp.layers);
                if (s > best_s + 1e-12) best_s = s, best = t;
            }
            const auto ref = forward(f.model, f.train.inputs[cl.members[best]]);
            for (std::size_t l = 0; l < g.layer_count(); ++l) {
                const auto units = cl.abstract.units(l);
                std::set<std::uint32_t> sa(a.path.layers[l].begin(), a.path.layers[l].end());
                std::size_t inter = 0;
                for (auto u : units) inter += sa.count(u);
                snpc_want.insert({cl.class_id, cl.cluster_id, l,
                                  oracle::scan_jaccard_bucket(inter, sa.size() + units.size() - inter, cfg.m)});
                double d2 = 0;
                for (auto u : units) {
                    const double diff = static_cast<double>(a.trace.layers[l][u]) - ref.layers[l][u];
                    d2 += diff * diff;
                }
                anpc_want.insert({cl.class_id, cl.cluster_id, l, oracle::scan_bucket(std::sqrt(d2), cfg.u, cfg.m)});
            }
        }
        const auto s = snpc_cells(f.model, g, x, cfg).cells;
        const auto an = anpc_cells(f.model, g, x, cfg).cells;
        EXPECT_EQ(std::set<Cell>(s.begin(), s.end()), snpc_want) << "sample " << i;
        EXPECT_EQ(std::set<Cell>(an.begin(), an.end()), anpc_want) << "sample " << i;
    }
}

TEST_F(FixtureCoverage, SuiteAlgebra) {
    const auto& f = *fixture_;
    const auto& g = *graph_;
    Rng rng(77);
    for (auto crit : {Criterion::Snpc, Criterion::Anpc}) {
        // cells per test input, computed once
        std::vector<CellBatch> batches;
        for (std::size_t i = 0; i < 120; ++i)
            batches.push_back(crit == Criterion::Snpc ? snpc_cells(f.model, g, f.test.inputs[i], {})
                                                      : anpc_cells(f.model, g, f.test.inputs[i], {}));
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<std::size_t> a, extra;
            for (std::size_t i = 0; i < batches.size(); ++i) {
                const double u = rng.uniform();
                if (u < 0.2) a.push_back(i);
                else if (u < 0.4) extra.push_back(i);
            }
            CoverageState sa(g, crit), sb(g, crit), shuffled(g, crit);
            for (auto i : a) sa.insert(batches[i]);
            auto b = a;
            b.insert(b.end(), extra.begin(), extra.end());
            for (auto i : b) sb.insert(batches[i]);
            rng.shuffle(b);
            for (auto i : b) shuffled.insert(batches[i]);
            EXPECT_GE(coverage(sb), coverage(sa));
            EXPECT_LE(coverage(sb), 1.0);
            EXPECT_EQ(shuffled.cells(), sb.cells());
            CoverageState merged(g, crit), part(g, crit);
            for (auto i : a) merged.insert(batches[i]);
            for (auto i : extra) part.insert(batches[i]);
            merged.merge(part);
            EXPECT_EQ(merged.cells(), sb.cells());
            EXPECT_EQ(merged.cells_covered(), sb.cells_covered());
        }
    }
}

TEST_F(FixtureCoverage, IncrementalEqualsBatch) {
    const auto& f = *fixture_;
    const auto& g = *graph_;
    std::vector<Tensor> suite(f.test.inputs.begin(), f.test.inputs.begin() + 80);
    CoverageState one(g, Criterion::Snpc), batch(g, Criterion::Snpc);
    for (const auto& x : suite) snpc_update(one, f.model, g, x);
    cover_suite(batch, f.model, suite);
    EXPECT_EQ(one.cells(), batch.cells());
}

TEST_F(FixtureCoverage, ReportIsValidJson) {
    const auto& f = *fixture_;
    CoverageState s(*graph_, Criterion::Anpc, {50, 0.01});
    std::vector<Tensor> suite(f.test.inputs.begin(), f.test.inputs.begin() + 40);
    cover_suite(s, f.model, suite);
    const auto j = nlohmann::json::parse(coverage_report_json(s));
    EXPECT_EQ(j.at("criterion"), "anpc");
    EXPECT_EQ(j.at("m"), 50);
    EXPECT_EQ(j.at("cells_covered"), s.cells_covered());
    EXPECT_GT(j.at("clamped_count").get<std::size_t>(), 0u);  // tiny bound forces clamping
    EXPECT_EQ(j.at("per_class").size(), 3u);
    std::size_t sum = 0;
    for (const auto& c : j.at("per_class")) sum += c.at("cells_covered").get<std::size_t>();
    EXPECT_EQ(sum, s.cells_covered());
}

}  // namespace
}  // namespace npc
