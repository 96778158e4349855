// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace bseg::data {

/// Interleaved 8-bit raster, row-major H x W x C.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int h, int w, int c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c),
          pixels(static_cast<std::size_t>(h) * w * c, fill) {}

    [[nodiscard]] std::uint8_t& at(int y, int x, int ch) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
    [[nodiscard]] std::uint8_t at(int y, int x, int ch) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
    friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

/// Integer class-id raster, row-major H x W.
struct LabelRaster {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> ids;

    [[nodiscard]] std::int32_t at(int y, int x) const {
        return ids[static_cast<std::size_t>(y) * width + x];
    }
};

/// Reads PNG or TIFF as RGB (grey is replicated, alpha dropped).
ImageU8 read_rgb(const std::filesystem::path& path);
/// Reads a single-channel 8- or 16-bit class-id raster.
LabelRaster read_labels(const std::filesystem::path& path);
/// Binary mask stored as 0/255; returns 1 for every nonzero pixel.
std::vector<std::uint8_t> read_mask(const std::filesystem::path& path, int* height = nullptr,
                                    int* width = nullptr);

/// PNG writers; parent directories are created.
void write_png(const std::filesystem::path& path, const ImageU8& image);
void write_mask_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask,
                    int height, int width);
/// Encoded PNG bytes (deterministic for identical input).
std::vector<std::uint8_t> encode_png(const ImageU8& image);

}  // namespace bseg::data
