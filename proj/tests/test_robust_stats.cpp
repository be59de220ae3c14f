#include <gtest/gtest.h>

#include "elect/rng.hpp"
#include "elect/robust_stats.hpp"

using namespace elect;

TEST(Quantile, LinearInterpolation) {
    std::vector<double> v{0, 1, 2, 3, 100};
    EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.0);
    EXPECT_DOUBLE_EQ(quantile(v, 0.75), 3.0);
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(median({5, 1, 3}), 3.0);
    EXPECT_THROW(quantile({}, 0.5), InvalidArgument);
}

TEST(IqrNormalize, ConstantMapIsZero) {
    Tensor out = iqr_clamp_normalize(Tensor({4}, 5.0f));
    EXPECT_EQ(out.values(), (std::vector<float>{0, 0, 0, 0}));
}

TEST(IqrNormalize, OutlierClampedToUpperFence) {
    // q1 = 1, q3 = 3, upper fence = 3 + 1.5 * 2 = 6.
    Tensor out = iqr_clamp_normalize(Tensor({5}, {0, 1, 2, 3, 100}));
    const std::vector<float> expect{0.0f, 1.0f / 6, 2.0f / 6, 3.0f / 6, 1.0f};
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(out[i], expect[i], 1e-7);
}

TEST(IqrNormalize, SinglePixelKeepsItsPeak) {
    Tensor m({3, 3}, 0.0f);
    m[4] = 2.5f;
    Tensor out = iqr_clamp_normalize(m);
    EXPECT_FLOAT_EQ(out[4], 1.0f);
    for (int i = 0; i < 9; ++i) {
        if (i != 4) EXPECT_FLOAT_EQ(out[i], 0.0f);
    }
}

TEST(IqrNormalize, RejectsNanAndEmpty) {
    Tensor t({2}, 0.0f);
    t.data()[0] = NAN;
    EXPECT_THROW(iqr_clamp_normalize(t), InvalidArgument);
    EXPECT_THROW(iqr_clamp_normalize(Tensor()), InvalidArgument);
}

TEST(IqrNormalize, PropertyRangeAndOrder) {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        SeededRng rng(seed);
        const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 64));
        Tensor t = gaussian_noise(rng, {n});
        if (seed % 3 == 0) t[0] = 1e4f;  // heavy outlier
        Tensor out = iqr_clamp_normalize(t);
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_GE(out[i], 0.0f);
            ASSERT_LE(out[i], 1.0f);
            for (std::size_t j = 0; j < n; ++j) {
                if (t[i] < t[j]) ASSERT_LE(out[i], out[j]);
            }
        }
    }
}
