#include "npc/error.hpp"
#include "npc/lrp.hpp"
#include "npc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace npc {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

Model cnn(std::uint64_t seed, bool with_bias) {
    Rng rng(seed);
    auto b = [&](std::size_t n) { return with_bias ? random_tensor({n}, rng) : Tensor({n}); };
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec::conv2d(random_tensor({4, 2, 3, 3}, rng), b(4), {1, 1},
                                       {PostOp::relu(), PostOp::maxpool(2, 2)}));
    layers.push_back(LayerSpec::conv2d(random_tensor({3, 4, 2, 2}, rng), b(3), {1, 0},
                                       {PostOp::relu(), PostOp::flatten()}));
    layers.push_back(LayerSpec::dense(random_tensor({6, 12}, rng), b(6), {PostOp::relu()}));
    layers.push_back(LayerSpec::dense(random_tensor({3, 6}, rng), b(3)));
    return Model({2, 6, 6}, std::move(layers), 3);
}

TEST(Lrp, LinearDecomposition) {
    const Model m({2}, {LayerSpec::dense(Tensor::matrix({{1, 1}, {0, 0}}), Tensor({2}))}, 2);
    const auto r = relevance(m.with_input_layer(true), Tensor::vector({2, 3}));
    ASSERT_EQ(r.layers.size(), 1u);
    EXPECT_NEAR(r.layers[0][0], 2.0, 1e-5);
    EXPECT_NEAR(r.layers[0][1], 3.0, 1e-5);
    EXPECT_NEAR(r.origin_logit, 5.0, 0.0);
}

TEST(Lrp, ZeroInputBiasFreeGivesZero) {
    const auto m = cnn(1, false);
    const auto r = relevance(m, Tensor({2, 6, 6}));
    for (const auto& l : r.layers)
        for (double v : l) EXPECT_EQ(v, 0.0);
}

TEST(Lrp, LayerLengthsMatchNeuronCounts) {
    const auto m = cnn(2, true).with_input_layer(true);
    Rng rng(3);
    const auto r = relevance(m, random_tensor({2, 6, 6}, rng, 0, 1));
    ASSERT_EQ(r.layers.size(), m.coverage_layer_count());
    for (std::size_t l = 0; l < r.layers.size(); ++l) EXPECT_EQ(r.layers[l].size(), m.neuron_count(l));
}

TEST(Lrp, ConservationWithBiasLeakOnCnn) {
    const auto m = cnn(4, true).with_input_layer(true);
    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
        const auto r = relevance(m, random_tensor({2, 6, 6}, rng, 0, 1));
        for (std::size_t l = 0; l < r.layers.size(); ++l) {
            EXPECT_LE(r.conservation_gap(l), 0.02 * std::abs(r.origin_logit) + 1e-4) << "layer " << l;
        }
    }
}

TEST(Lrp, BiasFreeNetworkConservesWithoutLeak) {
    const auto m = cnn(6, false);
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        const auto r = relevance(m, random_tensor({2, 6, 6}, rng, 0, 1));
        for (std::size_t l = 0; l < r.layers.size(); ++l) {
            EXPECT_EQ(r.absorbed[l], 0.0);
            EXPECT_NEAR(r.layer_sum(l), r.origin_logit, 1e-4 + 1e-3 * std::abs(r.origin_logit));
        }
    }
}

TEST(Lrp, ZPlusGivesNonNegativeRelevanceForPositiveLogit) {
    const auto m = cnn(8, true);
    Rng rng(9);
    for (int i = 0; i < 20; ++i) {
        const auto r = relevance(m, random_tensor({2, 6, 6}, rng, 0, 1), std::nullopt, {LrpRule::ZPlus, 0.0});
        if (r.origin_logit <= 0) continue;
        for (std::size_t l = 0; l < r.layers.size(); ++l) {
            for (double v : r.layers[l]) EXPECT_GE(v, 0.0);
            EXPECT_NEAR(r.layer_sum(l) + r.absorbed[l], r.origin_logit, 1e-6 * std::max(1.0, r.origin_logit));
        }
    }
}

TEST(Lrp, TargetSelectsLogit) {
    const auto m = cnn(10, true);
    Rng rng(11);
    const auto x = random_tensor({2, 6, 6}, rng, 0, 1);
    const auto t = forward(m, x);
    for (std::size_t c = 0; c < 3; ++c) {
        const auto r = relevance(m, x, c);
        EXPECT_EQ(r.target_class, c);
        EXPECT_EQ(r.origin_logit, t.logits[c]);
    }
    EXPECT_THROW(relevance(m, x, 3), InvalidArgument);
}

TEST(Lrp, Deterministic) {
    const auto m = cnn(12, true);
    Rng rng(13);
    const auto x = random_tensor({2, 6, 6}, rng, 0, 1);
    EXPECT_EQ(relevance(m, x).layers, relevance(m, x).layers);
}

TEST(Lrp, MaxpoolRoutesToWinner) {
    // 1x2x2 input, identity 1x1 conv, relu, 2x2 maxpool -> one value, dense to 2 logits.
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec::conv2d(Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}), {1, 0},
                                       {PostOp::relu(), PostOp::maxpool(2, 2), PostOp::flatten()}));
    layers.push_back(LayerSpec::dense(Tensor::matrix({{1}, {0}}), Tensor({2})));
    const Model m = Model({1, 2, 2}, std::move(layers), 2).with_input_layer(true);
    const auto pass = forward_cached(m, Tensor({1, 2, 2}, std::vector<float>{0.1f, 0.9f, 0.3f, 0.2f}));
    const auto r = relevance(m, pass);
    // each epsilon-rule layer keeps z / (z + 1e-6) of the relevance
    EXPECT_NEAR(r.layers[1][0], 0.9, 1e-5);
    EXPECT_NEAR(r.layers[0][0], 0.9, 1e-5);  // input channel sum
}

}  // namespace
}  // namespace npc
