#pragma once

#include "npc/dataset.hpp"
#include "npc/model.hpp"

#include <cstdint>

namespace npc::testing {

/// Blobs in [0,1]^2, three classes, and a trained 2-16-16-3 ReLU network.
struct Fixture {
    Model model;
    LabeledDataset train;  // 500 samples
    LabeledDataset test;   // 500 samples, same centers, fresh draw
    double train_accuracy = 0.0;
};

inline constexpr std::size_t kFixtureSamples = 500;

Fixture blobs_fixture(std::uint64_t seed);

}  // namespace npc::testing
