// SPDX-License-Identifier: Apache-2.0
#include "bseg/data/raster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bseg::data {

void validate(const RasterScene& scene) {
    if (scene.image.channels != 3) {
        throw std::invalid_argument("scene " + scene.scene_id + ": image must be RGB");
    }
    if (scene.image.height != scene.labels.height || scene.image.width != scene.labels.width) {
        throw std::invalid_argument("scene " + scene.scene_id + ": image is " +
                                    std::to_string(scene.image.height) + "x" +
                                    std::to_string(scene.image.width) + " but labels are " +
                                    std::to_string(scene.labels.height) + "x" +
                                    std::to_string(scene.labels.width));
    }
    if (scene.resolution_m && !(*scene.resolution_m > 0.0)) {
        throw std::invalid_argument("scene " + scene.scene_id + ": resolution_m must be positive");
    }
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
}

void validate(const NormalizationSpec& spec) {
    for (int c = 0; c < 3; ++c) {
        if (!(spec.std[c] > 0.0)) throw std::invalid_argument("normalization std must be > 0");
        if (!(spec.mean[c] >= 0.0 && spec.mean[c] <= 1.0)) {
            throw std::invalid_argument("normalization mean must lie in [0, 1]");
        }
    }
}

std::vector<int> window_offsets(int extent, int tile_size, int stride) {
    if (tile_size < 1 || stride < 1) throw std::invalid_argument("tile size and stride must be >= 1");
    if (extent < tile_size) {
        throw std::invalid_argument("scene extent " + std::to_string(extent) +
                                    " is smaller than tile size " + std::to_string(tile_size));
    }
    std::vector<int> out;
    for (int o = 0; o + tile_size <= extent; o += stride) out.push_back(o);
    if (out.back() + tile_size < extent) out.push_back(extent - tile_size);
    return out;
}

std::vector<std::uint8_t> binarize_labels(std::span<const std::int32_t> labels,
                                          const std::set<int>& building_ids) {
    std::vector<std::uint8_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = building_ids.count(labels[i]) ? 1 : 0;
    return out;
}

std::vector<TileSample> tile_scene(const RasterScene& scene, int tile_size, int stride,
                                   const std::set<int>& building_ids) {
    validate(scene);
    const auto rows = window_offsets(scene.image.height, tile_size, stride);
    const auto cols = window_offsets(scene.image.width, tile_size, stride);
    const auto mask = binarize_labels(scene.labels.ids, building_ids);
    std::vector<TileSample> out;
    for (int r : rows) {
        for (int c : cols) {
            TileSample t;
            t.scene_id = scene.scene_id;
            t.row = r;
            t.col = c;
            t.image = ImageU8(tile_size, tile_size, 3);
            t.mask.resize(static_cast<std::size_t>(tile_size) * tile_size);
            for (int y = 0; y < tile_size; ++y) {
                const std::size_t src = (static_cast<std::size_t>(r + y) * scene.image.width + c);
                std::copy_n(scene.image.pixels.begin() + static_cast<std::ptrdiff_t>(src * 3),
                            tile_size * 3,
                            t.image.pixels.begin() + static_cast<std::ptrdiff_t>(y) * tile_size * 3);
                std::copy_n(mask.begin() + static_cast<std::ptrdiff_t>(src), tile_size,
                            t.mask.begin() + static_cast<std::ptrdiff_t>(y) * tile_size);
            }
            out.push_back(std::move(t));
        }
    }
    return out;
}

nn::Tensor to_unit(const ImageU8& image) {
    if (image.channels != 3) throw std::invalid_argument("to_unit expects an RGB image");
    nn::Tensor t(nn::Shape{1, 3, image.height, image.width});
    const std::size_t plane = t.shape().plane();
    for (int c = 0; c < 3; ++c) {
        float* dst = t.plane(0, c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = image.pixels[i * 3 + c] / 255.0f;
    }
    return t;
}

nn::Tensor normalize(const nn::Tensor& unit, const NormalizationSpec& spec) {
    const nn::Shape s = unit.shape();
    if (s.c != 3) throw std::invalid_argument("normalize expects 3 channels");
    nn::Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < 3; ++c) {
            const float m = static_cast<float>(spec.mean[c]);
            const float inv = static_cast<float>(1.0 / spec.std[c]);
            const float* src = unit.plane(n, c);
            float* dst = out.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = (src[i] - m) * inv;
        }
    }
    return out;
}

nn::Tensor normalize(const ImageU8& image, const NormalizationSpec& spec) {
    return normalize(to_unit(image), spec);
}

nn::Tensor denormalize(const nn::Tensor& normalized, const NormalizationSpec& spec) {
    const nn::Shape s = normalized.shape();
    nn::Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < 3; ++c) {
            const float m = static_cast<float>(spec.mean[c]);
            const float sd = static_cast<float>(spec.std[c]);
            const float* src = normalized.plane(n, c);
            float* dst = out.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] * sd + m;
        }
    }
    return out;
}

ImageU8 to_image(const nn::Tensor& unit) {
    const nn::Shape s = unit.shape();
    ImageU8 out(s.h, s.w, s.c);
    for (int c = 0; c < s.c; ++c) {
        const float* src = unit.plane(0, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
            const float v = std::clamp(src[i], 0.0f, 1.0f);
            out.pixels[i * s.c + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    return out;
}

void StatsAccumulator::add(const ImageU8& image) {
    if (image.channels != 3) throw std::invalid_argument("stats expect RGB tiles");
    const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            const std::uint64_t v = image.pixels[i * 3 + c];
            sum_[c] += v;
            sum_sq_[c] += v * v;
        }
    }
    pixels_ += n;
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
    for (int c = 0; c < 3; ++c) {
        sum_[c] += other.sum_[c];
        sum_sq_[c] += other.sum_sq_[c];
    }
    pixels_ += other.pixels_;
}

ChannelStats StatsAccumulator::finish(const NormalizationSpec& spec) const {
    if (pixels_ == 0) throw std::invalid_argument("dataset stats: no pixels");
    ChannelStats out;
    out.pixels = pixels_;
    const double n = static_cast<double>(pixels_);
    for (int c = 0; c < 3; ++c) {
        // n * sum(x^2) - sum(x)^2 is exact in 128-bit integers.
        const unsigned __int128 num = static_cast<unsigned __int128>(pixels_) * sum_sq_[c] -
                                      static_cast<unsigned __int128>(sum_[c]) * sum_[c];
        const double var_raw = static_cast<double>(num) / (n * n);
        const double mean_raw = static_cast<double>(sum_[c]) / n;
        out.mean[c] = (mean_raw / 255.0 - spec.mean[c]) / spec.std[c];
        out.std[c] = std::sqrt(var_raw) / (255.0 * spec.std[c]);
        if (num == 0) out.degenerate = true;
    }
    return out;
}

}  // namespace bseg::data
