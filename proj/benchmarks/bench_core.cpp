#include "npc/abstraction.hpp"
#include "npc/coverage.hpp"
#include "npc/dataset.hpp"
#include "npc/lrp.hpp"
#include "npc/trainkit.hpp"

#include <benchmark/benchmark.h>

#include <map>

namespace {

struct Setup {
    npc::Model model;
    npc::LabeledDataset train;
    npc::DecisionGraph graph;
};

// Untrained network of the given width; timing does not depend on accuracy.
const Setup& setup(std::size_t width) {
    static std::map<std::size_t, Setup> cache;
    auto it = cache.find(width);
    if (it != cache.end()) return it->second;
    npc::BlobsConfig bc;
    bc.dims = 8;
    bc.classes = 4;
    bc.samples_per_class = 50;
    bc.seed = 1;
    auto train = npc::make_blobs(bc);
    auto model = npc::init_model(npc::Architecture::mlp(8, {width, width}, 4), 1);
    auto graph = npc::build_decision_graph(model, train, {});
    return cache.emplace(width, Setup{std::move(model), std::move(train), std::move(graph)}).first->second;
}

void BM_Forward(benchmark::State& state) {
    const auto& s = setup(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(npc::forward(s.model, s.train.inputs[0]));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(128)->Arg(512);

void BM_Relevance(benchmark::State& state) {
    const auto& s = setup(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(npc::relevance(s.model, s.train.inputs[0]));
}
BENCHMARK(BM_Relevance)->Arg(16)->Arg(128)->Arg(512);

void BM_SnpcUpdate(benchmark::State& state) {
    const auto& s = setup(static_cast<std::size_t>(state.range(0)));
    npc::CoverageState cov(s.graph, npc::Criterion::Snpc);
    std::size_t i = 0;
    for (auto _ : state) {
        npc::snpc_update(cov, s.model, s.graph, s.train.inputs[i++ % s.train.size()]);
    }
}
BENCHMARK(BM_SnpcUpdate)->Arg(16)->Arg(128);

void BM_AnpcUpdate(benchmark::State& state) {
    const auto& s = setup(static_cast<std::size_t>(state.range(0)));
    npc::CoverageState cov(s.graph, npc::Criterion::Anpc);
    std::size_t i = 0;
    for (auto _ : state) {
        npc::anpc_update(cov, s.model, s.graph, s.train.inputs[i++ % s.train.size()]);
    }
}
BENCHMARK(BM_AnpcUpdate)->Arg(16)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
