#include <gtest/gtest.h>

#include "adr/rng.hpp"

using adr::Rng;

TEST(Rng, SameSeedSameSequence) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiffer) {
    Rng a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++equal;
    EXPECT_LT(equal, 4);
}

TEST(Rng, SubstreamsAreIndependent) {
    Rng a = Rng::substream(7, "shuffle", 0);
    Rng b = Rng::substream(7, "shuffle", 1);
    Rng c = Rng::substream(7, "attack", 0);
    EXPECT_NE(a.next_u64(), b.next_u64());
    Rng a2 = Rng::substream(7, "shuffle", 0);
    a2.next_u64();
    EXPECT_NE(a2.next_u64(), c.next_u64());
    Rng a3 = Rng::substream(7, "shuffle", 0);
    Rng a4 = Rng::substream(7, "shuffle", 0);
    for (int i = 0; i < 32; ++i) EXPECT_EQ(a3.next_u64(), a4.next_u64());
}

TEST(Rng, UniformRange) {
    Rng r(3);
    for (int i = 0; i < 10000; ++i) {
        const double v = r.uniform();
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const double v = r.uniform(-1.0, 1.0);
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Rng, NormalMoments) {
    Rng r(11);
    double sum = 0.0, sq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        sum += v;
        sq += v * v;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.02);
    EXPECT_NEAR(sq / n, 1.0, 0.03);
}

TEST(Rng, BelowIsInRangeAndRejectsZero) {
    Rng r(5);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(17), 17u);
    EXPECT_THROW(r.below(0), adr::parameter_error);
}

TEST(Rng, ShuffleDeterministic) {
    std::vector<int> a{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> b = a;
    Rng ra = Rng::substream(9, "s", 0);
    Rng rb = Rng::substream(9, "s", 0);
    ra.shuffle(a);
    rb.shuffle(b);
    EXPECT_EQ(a, b);
}
