// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "bseg/models/spec.hpp"

using namespace bseg::models;

TEST(ReceptiveField, SingleConv) { EXPECT_EQ(receptive_field({{3, 1, 1, 1}}), 3); }

TEST(ReceptiveField, Vgg16Stack) { EXPECT_EQ(receptive_field(encoder_layers(vgg_encoder(16))), 212); }

TEST(ReceptiveField, Resnet50Stack) {
    EXPECT_EQ(receptive_field(encoder_layers(resnet_encoder(50))), 483);
}
