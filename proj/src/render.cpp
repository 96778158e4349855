// SPDX-License-Identifier: Apache-2.0
#include "bseg/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bseg/models/network.hpp"

namespace bseg::render {

using data::ImageU8;

ImageU8 overlay(const ImageU8& rgb, const std::vector<std::uint8_t>& mask, double alpha,
                std::array<std::uint8_t, 3> color) {
    if (rgb.channels != 3) throw std::invalid_argument("overlay expects an RGB image");
    if (mask.size() != static_cast<std::size_t>(rgb.height) * rgb.width) {
        throw std::invalid_argument("overlay: mask dims differ from image");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("overlay alpha must lie in [0, 1]");
    ImageU8 out = rgb;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        for (int c = 0; c < 3; ++c) {
            const double v = (1.0 - alpha) * rgb.pixels[i * 3 + c] + alpha * color[c];
            out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    return out;
}

ImageU8 heatmap(const nn::Tensor& map) {
    const nn::Shape s = map.shape();
    if (s.n != 1 || s.c != 1) throw std::invalid_argument("heatmap expects a 1 x 1 x H x W map");
    const auto v = map.values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = static_cast<double>(*hi) - *lo;
    ImageU8 out(s.h, s.w, 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double t = range > 0.0 ? (v[i] - *lo) / range : 0.0;
        const auto g = static_cast<std::uint8_t>(std::lround(255.0 * t));
        out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = g;
    }
    return out;
}

ImageU8 mask_image(const std::vector<std::uint8_t>& mask, int height, int width) {
    if (mask.size() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("mask_image: size mismatch");
    }
    ImageU8 out(height, width, 3);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const std::uint8_t g = mask[i] ? 255 : 0;
        out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = g;
    }
    return out;
}

ImageU8 resize_nearest(const ImageU8& image, int height, int width) {
    ImageU8 out(height, width, image.channels);
    for (int y = 0; y < height; ++y) {
        const int sy = static_cast<int>(static_cast<long>(y) * image.height / height);
        for (int x = 0; x < width; ++x) {
            const int sx = static_cast<int>(static_cast<long>(x) * image.width / width);
            for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
        }
    }
    return out;
}

ImageU8 hstack(const std::vector<ImageU8>& images, int gap) {
    if (images.empty()) throw std::invalid_argument("hstack: no images");
    int h = 0, w = 0;
    for (const auto& im : images) {
        if (im.channels != 3) throw std::invalid_argument("hstack expects RGB images");
        h = std::max(h, im.height);
        w += im.width;
    }
    w += gap * static_cast<int>(images.size() - 1);
    ImageU8 out(h, w, 3, 255);
    int x0 = 0;
    for (const auto& im : images) {
        for (int y = 0; y < im.height; ++y) {
            for (int x = 0; x < im.width; ++x) {
                for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = im.at(y, x, c);
            }
        }
        x0 += im.width + gap;
    }
    return out;
}

ImageU8 vstack(const std::vector<ImageU8>& images, int gap) {
    if (images.empty()) throw std::invalid_argument("vstack: no images");
    int h = 0, w = 0;
    for (const auto& im : images) {
        if (im.channels != 3) throw std::invalid_argument("vstack expects RGB images");
        w = std::max(w, im.width);
        h += im.height;
    }
    h += gap * static_cast<int>(images.size() - 1);
    ImageU8 out(h, w, 3, 255);
    int y0 = 0;
    for (const auto& im : images) {
        for (int y = 0; y < im.height; ++y) {
            std::copy_n(im.pixels.begin() + static_cast<std::ptrdiff_t>(y) * im.width * 3, im.width * 3,
                        out.pixels.begin() + (static_cast<std::ptrdiff_t>(y0 + y) * w) * 3);
        }
        y0 += im.height + gap;
    }
    return out;
}

std::vector<ImageU8> activation_tiles(const std::vector<nn::Tensor>& stages, int height, int width) {
    std::vector<ImageU8> out;
    for (const auto& s : stages) out.push_back(resize_nearest(heatmap(models::channel_mean(s)), height, width));
    return out;
}

}  // namespace bseg::render
