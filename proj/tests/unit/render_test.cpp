// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "bseg/render.hpp"

using namespace bseg;

TEST(Render, OverlayBlendsOnlyBuildingPixels) {
    data::ImageU8 im(1, 2, 3, 100);
    const auto out = render::overlay(im, {1, 0});
    // 0.6 * 100 + 0.4 * 255 = 162, 0.6 * 100 = 60
    EXPECT_EQ(out.at(0, 0, 0), 162);
    EXPECT_EQ(out.at(0, 0, 1), 60);
    EXPECT_EQ(out.at(0, 0, 2), 60);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(out.at(0, 1, c), 100);
    EXPECT_THROW(render::overlay(im, {1}), std::invalid_argument);
    EXPECT_THROW(render::overlay(im, {1, 0}, 1.5), std::invalid_argument);
}

TEST(Render, StacksInsertGaps) {
    const std::vector<data::ImageU8> parts{data::ImageU8(4, 5, 3), data::ImageU8(4, 3, 3)};
    const auto h = render::hstack(parts);
    EXPECT_EQ(h.height, 4);
    EXPECT_EQ(h.width, 5 + 2 + 3);
    EXPECT_EQ(h.at(0, 5, 0), 255);
    const auto v = render::vstack(parts);
    EXPECT_EQ(v.height, 4 + 2 + 4);
    EXPECT_EQ(v.width, 5);
}

TEST(Render, HeatmapAndMaskImage) {
    nn::Tensor t(nn::Shape{1, 1, 1, 2}, std::vector<float>{0.0f, 1.0f});
    const auto hm = render::heatmap(t);
    EXPECT_EQ(hm.width, 2);
    EXPECT_NE(hm.pixels[0], hm.pixels[3]);
    const auto m = render::mask_image({0, 1, 1, 0}, 2, 2);
    EXPECT_EQ(m.at(0, 1, 0), 255);
    EXPECT_EQ(m.at(0, 0, 0), 0);
    const auto big = render::resize_nearest(m, 4, 4);
    EXPECT_EQ(big.at(0, 3, 0), 255);
    EXPECT_EQ(big.at(3, 3, 0), 0);
}
