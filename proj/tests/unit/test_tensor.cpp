#include "npc/error.hpp"
#include "npc/rng.hpp"
#include "npc/tensor.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

namespace npc {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

TEST(Tensor, ConstructorRejectsWrongDataLength) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), DimensionError);
    EXPECT_NO_THROW(Tensor({2, 3}, std::vector<float>(6)));
}

TEST(Tensor, MatmulIdentity) {
    const auto r = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3}, {4}}));
    EXPECT_EQ(r, Tensor::matrix({{3}, {4}}));
}

TEST(Tensor, MatmulHandValue) {
    EXPECT_EQ(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), Tensor::matrix({{11}}));
}

TEST(Tensor, MatmulMismatchNamesBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({4, 5}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
    }
}

TEST(Tensor, MatmulAgreesWithNaiveLoops) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = 1 + rng.index(6), k = 1 + rng.index(6), c = 1 + rng.index(6);
        const auto a = random_tensor({r, k}, rng), b = random_tensor({k, c}, rng);
        const auto got = matmul(a, b);
        const auto want = oracle::matmul(std::vector<double>(a.values().begin(), a.values().end()),
                                         std::vector<double>(b.values().begin(), b.values().end()), r, k, c);
        for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5);
    }
}

TEST(Tensor, IdentityTimesMatrixIsExact) {
    Rng rng(3);
    const auto a = random_tensor({4, 5}, rng);
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0f;
    EXPECT_EQ(matmul(eye, a), a);
}

TEST(Tensor, ConvIdentityKernel) {
    Tensor in({1, 3, 3}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto out = conv2d(in, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}), {});
    EXPECT_EQ(out, in);
}

TEST(Tensor, ConvZeroInputGivesBias) {
    const auto out = conv2d(Tensor({2, 4, 4}), Tensor({3, 2, 3, 3}, 0.5f), Tensor({3}, std::vector<float>{1, -2, 3}),
                            {1, 1});
    ASSERT_EQ(out.shape(), (Shape{3, 4, 4}));
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(out[k * 16 + i], (std::vector<float>{1, -2, 3}[k]));
}

TEST(Tensor, ConvAgreesWithPaddedReference) {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t C = 1 + rng.index(3), H = 3 + rng.index(5), W = 3 + rng.index(5);
        const std::size_t K = 1 + rng.index(3), kh = 1 + rng.index(3), kw = 1 + rng.index(3);
        const std::size_t stride = 1 + rng.index(2), pad = rng.index(2);
        const auto in = random_tensor({C, H, W}, rng);
        const auto k = random_tensor({K, C, kh, kw}, rng);
        const auto b = random_tensor({K}, rng);
        const auto got = conv2d(in, k, b, {stride, pad});
        const auto want = oracle::conv2d(in, k, b, stride, pad);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5);
    }
}

TEST(Tensor, ConvKernelLargerThanPaddedInputThrows) {
    EXPECT_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), {1, 0}), DimensionError);
    EXPECT_NO_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), {1, 1}));
}

TEST(Tensor, ReluValuesAndIdempotence) {
    const auto r = relu(Tensor::vector({-1, 0, 2}));
    EXPECT_EQ(r, Tensor::vector({0, 0, 2}));
    EXPECT_EQ(relu(r), r);
}

TEST(Tensor, MaxpoolHandValue) {
    const auto r = maxpool2d(Tensor({1, 2, 2}, std::vector<float>{1, 2, 3, 4}), {2, 2});
    EXPECT_EQ(r, Tensor({1, 1, 1}, std::vector<float>{4}));
}

TEST(Tensor, MaxpoolConstant) {
    const auto r = maxpool2d(Tensor({2, 5, 5}, 1.5f), {2, 2});
    EXPECT_EQ(r, Tensor({2, 2, 2}, 1.5f));
}

TEST(Tensor, MaxpoolWindowTooLargeThrows) {
    EXPECT_THROW(maxpool2d(Tensor({1, 2, 2}), {3, 1}), DimensionError);
}

TEST(Tensor, MaxpoolTieGoesToFirstIndex) {
    std::vector<std::size_t> winners;
    maxpool2d(Tensor({1, 2, 2}, 7.0f), {2, 2}, winners);
    ASSERT_EQ(winners.size(), 1u);
    EXPECT_EQ(winners[0], 0u);
}

TEST(Tensor, AddAndScale) {
    EXPECT_EQ(add(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({4, 6}));
    EXPECT_EQ(scale(Tensor::vector({1, -2}), 2.0f), Tensor::vector({2, -4}));
    EXPECT_THROW(add(Tensor::vector({1}), Tensor::vector({1, 2})), DimensionError);
}

}  // namespace
}  // namespace npc
