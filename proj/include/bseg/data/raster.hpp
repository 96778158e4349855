// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bseg/data/image.hpp"
#include "bseg/nn/tensor.hpp"

namespace bseg::data {

struct RasterScene {
    std::string scene_id;
    ImageU8 image;  // RGB
    LabelRaster labels;
    std::optional<double> resolution_m;
};

void validate(const RasterScene& scene);

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& name);

/// Tile before normalization: RGB pixels plus a 0/1 building mask.
struct TileSample {
    ImageU8 image;
    std::vector<std::uint8_t> mask;
    std::string scene_id;
    int row = 0;
    int col = 0;
    Split split = Split::train;

    [[nodiscard]] int size() const { return image.height; }
};

struct NormalizationSpec {
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std{0.229, 0.224, 0.225};
};

void validate(const NormalizationSpec& spec);

/// Window origins along one axis; the last window is clamped to the edge.
std::vector<int> window_offsets(int extent, int tile_size, int stride);

std::vector<std::uint8_t> binarize_labels(std::span<const std::int32_t> labels,
                                          const std::set<int>& building_ids);

std::vector<TileSample> tile_scene(const RasterScene& scene, int tile_size, int stride,
                                   const std::set<int>& building_ids);

/// 1 x 3 x H x W tensor of x / 255.
nn::Tensor to_unit(const ImageU8& image);
/// (x - mean) / std per channel on a [0, 1]-scaled tensor.
nn::Tensor normalize(const nn::Tensor& unit, const NormalizationSpec& spec);
nn::Tensor normalize(const ImageU8& image, const NormalizationSpec& spec);
nn::Tensor denormalize(const nn::Tensor& normalized, const NormalizationSpec& spec);
/// Quantizes a [0, 1] tensor (batch 0) back to RGB bytes.
ImageU8 to_image(const nn::Tensor& unit);

struct ChannelStats {
    std::array<double, 3> mean{};  // of normalized values
    std::array<double, 3> std{};
    std::uint64_t pixels = 0;
    bool degenerate = false;  // some channel has zero variance
};

/// Exact integer accumulation of per-channel sums over raw bytes; order independent.
class StatsAccumulator {
public:
    void add(const ImageU8& image);
    void merge(const StatsAccumulator& other);
    [[nodiscard]] ChannelStats finish(const NormalizationSpec& spec) const;

private:
    std::array<std::uint64_t, 3> sum_{};
    std::array<std::uint64_t, 3> sum_sq_{};
    std::uint64_t pixels_ = 0;
};

}  // namespace bseg::data
