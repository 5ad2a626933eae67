#include "fixture.hpp"

#include "npc/trainkit.hpp"

#include <numeric>
#include <vector>

namespace npc::testing {

namespace {
LabeledDataset first_n(const LabeledDataset& d, std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return d.subset(idx);
}
}  // namespace

Fixture blobs_fixture(std::uint64_t seed) {
    BlobsConfig blobs;
    blobs.dims = 2;
    blobs.classes = 3;
    blobs.samples_per_class = (kFixtureSamples + 2) / 3;
    blobs.seed = seed;
    auto train = first_n(make_blobs(blobs), kFixtureSamples);
    auto test = first_n(make_blobs_split(blobs, 0), kFixtureSamples);

    TrainConfig cfg;
    cfg.seed = seed;
    auto trained = train_sgd(Architecture::mlp(2, {16, 16}, 3), train, cfg);
    return Fixture{std::move(trained.model), std::move(train), std::move(test), trained.train_accuracy};
}

}  // namespace npc::testing
