// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bseg/data/image.hpp"
#include "bseg/nn/tensor.hpp"

namespace bseg::render {

/// Tints building pixels: out = (1 - alpha) * rgb + alpha * color.
data::ImageU8 overlay(const data::ImageU8& rgb, const std::vector<std::uint8_t>& mask, double alpha = 0.4,
                      std::array<std::uint8_t, 3> color = {255, 0, 0});

/// Grey image of a single-channel map, min-max stretched (constant maps become 0).
data::ImageU8 heatmap(const nn::Tensor& map);

/// Grey RGB rendering of a 0/1 mask.
data::ImageU8 mask_image(const std::vector<std::uint8_t>& mask, int height, int width);

/// Nearest-neighbour resize.
data::ImageU8 resize_nearest(const data::ImageU8& image, int height, int width);

/// Concatenates images left to right with `gap` white pixels; heights are padded.
data::ImageU8 hstack(const std::vector<data::ImageU8>& images, int gap = 2);
data::ImageU8 vstack(const std::vector<data::ImageU8>& images, int gap = 2);

/// One tile per stage: channel mean, stretched, upscaled to `height` x `width`.
std::vector<data::ImageU8> activation_tiles(const std::vector<nn::Tensor>& stages, int height, int width);

}  // namespace bseg::render
