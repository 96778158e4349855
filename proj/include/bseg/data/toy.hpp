// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "bseg/data/manifest.hpp"

namespace bseg::data {

/// Label ids used by the synthetic scenes.
inline constexpr int kToyGround = 0;
inline constexpr int kToyBuilding = 1;
inline constexpr int kToyCar = 2;

struct ToyOptions {
    int train_tiles = 200;  // before the validation carve-out
    int test_tiles = 50;
    int size = 64;
    std::uint64_t seed = 7;
    double val_fraction = 0.1;
    int halfres_factor = 2;  // test scenes upsampled by this factor for manifest_halfres.json
};

void validate(const ToyOptions& options);

/// Textured ground, small bright clutter squares ("cars") and bright
/// axis-aligned rectangular buildings of side 6..20 px.
RasterScene make_toy_scene(std::uint64_t seed, std::uint64_t index, int size,
                           const std::string& scene_id);

/// Bilinear image / nearest-label upsampling by an integer factor.
RasterScene upsample_scene(const RasterScene& scene, int factor);

struct ToyDataset {
    DatasetManifest manifest;  // out/manifest.json: train, val, test
    DatasetManifest halfres;   // out/manifest_halfres.json: same train/val, upsampled test
};

ToyDataset make_toy_dataset(const std::filesystem::path& out_dir, const ToyOptions& options);

}  // namespace bseg::data
