#include <gtest/gtest.h>

#include <cmath>

#include "elect/tensor.hpp"

using namespace elect;

TEST(Tensor, ConstructsAndIndexesRowMajor) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.ndim(), 2u);
    EXPECT_FLOAT_EQ(t[4], 5.0f);
    EXPECT_EQ(shape_str(t.shape()), "[2,3]");
}

TEST(Tensor, RejectsBadShapes) {
    EXPECT_THROW(Tensor(Shape{}), InvalidArgument);
    EXPECT_THROW(Tensor(Shape{2, 0}), InvalidArgument);
    EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), InvalidArgument);
}

TEST(Tensor, RejectsNonFiniteValues) {
    EXPECT_THROW(Tensor({2}, std::vector<float>{1.0f, NAN}), InvalidArgument);
    EXPECT_THROW(Tensor({1}, std::vector<float>{INFINITY}), InvalidArgument);
}

TEST(Tensor, ReshapeKeepsData) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = t.reshaped({6});
    EXPECT_EQ(r.shape(), (Shape{6}));
    EXPECT_EQ(r.values(), t.values());
    EXPECT_THROW(t.reshaped({4}), InvalidArgument);
}

TEST(Tensor, ZipAndDiff) {
    Tensor a({3}, {1, 2, 3});
    Tensor b({3}, {1, 0, 5});
    Tensor s = zip_with(a, b, [](float x, float y) { return x + y; });
    EXPECT_EQ(s.values(), (std::vector<float>{2, 2, 8}));
    EXPECT_FLOAT_EQ(max_abs_diff(a, b), 2.0f);
    EXPECT_THROW(zip_with(a, Tensor({2}), [](float x, float) { return x; }), InvalidArgument);
}

TEST(Tensor, SpatialDimsFoldLeadingAxes) {
    auto d = spatial_dims({1, 4, 8, 16});
    EXPECT_EQ(d.channels, 4u);
    EXPECT_EQ(d.height, 8u);
    EXPECT_EQ(d.width, 16u);
    EXPECT_EQ(d.plane(), 128u);
    auto flat = spatial_dims({3, 5});
    EXPECT_EQ(flat.channels, 1u);
    auto row = spatial_dims({7});
    EXPECT_EQ(row.height, 1u);
    EXPECT_EQ(row.width, 7u);
}
