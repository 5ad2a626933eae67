#include "npc/bytes.hpp"
#include "npc/error.hpp"
#include "npc/parallel.hpp"
#include "npc/rng.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <string>

namespace npc {
namespace {

TEST(Bytes, LittleEndianLayout) {
    ByteWriter w;
    w.u32(0x01020304u);
    w.u64(0x0a0b0c0d0e0f1011ull);
    w.f32(1.0f);
    const Bytes b = std::move(w).take();
    ASSERT_EQ(b.size(), 16u);
    EXPECT_EQ(b[0], 0x04);
    EXPECT_EQ(b[3], 0x01);
    EXPECT_EQ(b[4], 0x11);
    EXPECT_EQ(b[11], 0x0a);
    EXPECT_EQ(b[15], 0x3f);  // 1.0f = 0x3f800000
    EXPECT_EQ(b[14], 0x80);
}

TEST(Bytes, ReaderRoundTripAndOverrun) {
    ByteWriter w;
    w.u8(9);
    w.u32(123456);
    w.f32(-2.5f);
    const Bytes b = std::move(w).take();
    ByteReader r(b);
    EXPECT_EQ(r.u8(), 9);
    EXPECT_EQ(r.u32(), 123456u);
    EXPECT_EQ(r.f32(), -2.5f);
    EXPECT_EQ(r.remaining(), 0u);
    try {
        r.u8();
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 9u);
    }
}

TEST(Bytes, Fnv1aKnownVectors) {
    // Published FNV-1a 64 test vectors.
    const std::string a = "a", foobar = "foobar";
    EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64({reinterpret_cast<const std::uint8_t*>(a.data()), a.size()}), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64({reinterpret_cast<const std::uint8_t*>(foobar.data()), foobar.size()}), 0x85944171f73967e8ull);
}

TEST(Bytes, Base64RoundTrip) {
    EXPECT_EQ(base64_encode(Bytes{'f', 'o', 'o', 'b'}), "Zm9vYg==");
    Rng rng(1);
    for (std::size_t n = 0; n < 40; ++n) {
        Bytes b(n);
        for (auto& v : b) v = static_cast<std::uint8_t>(rng.index(256));
        EXPECT_EQ(base64_decode(base64_encode(b)), b);
    }
    EXPECT_THROW(base64_decode("abc"), FormatError);
}

TEST(Rng, SameSeedSameSequence) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, NamedStreamsDiffer) {
    EXPECT_NE(Rng::stream(1, "a").next_u64(), Rng::stream(1, "b").next_u64());
    EXPECT_NE(Rng::stream(1, "a", 0).next_u64(), Rng::stream(1, "a", 1).next_u64());
    EXPECT_EQ(Rng::stream(1, "a", 3).next_u64(), Rng::stream(1, "a", 3).next_u64());
}

TEST(Rng, IndexIsInRangeAndRoughlyUniform) {
    Rng r(5);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[r.index(7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 600);
}

TEST(Rng, NormalMoments) {
    Rng r(9);
    double s = 0, s2 = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.03);
    EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(Parallel, VisitsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Parallel, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                     if (i == 5) throw InvalidArgument("boom");
                 }),
                 InvalidArgument);
}

}  // namespace
}  // namespace npc
