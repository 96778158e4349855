// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "bseg/data/raster.hpp"

namespace bseg::data {

struct TileRecord {
    std::string image_path;  // relative to the manifest directory
    std::string mask_path;
    std::string scene_id;
    int row = 0;
    int col = 0;
    Split split = Split::train;
};

struct SceneRecord {
    std::string scene_id;
    int height = 0;
    int width = 0;
    std::optional<double> resolution_m;
};

struct ValidationPolicy {
    double fraction = 0.1;
    std::uint64_t seed = 0;
    std::string method = "scene_stratified_largest_remainder";
};

struct DatasetManifest {
    int version = 1;
    int tile_size = 512;
    int stride = 512;
    NormalizationSpec normalization;
    std::set<int> building_ids{1};
    ValidationPolicy validation;
    std::vector<SceneRecord> scenes;
    std::vector<TileRecord> tiles;
    std::filesystem::path root;  // directory holding the manifest; not serialized

    [[nodiscard]] std::vector<std::size_t> indices(Split split) const;
    [[nodiscard]] nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j, const std::filesystem::path& root);
};

/// Writes the manifest as pretty JSON.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Parses, checks split disjointness and that every tile file exists.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Loads the tile pixels and mask referenced by a record.
TileSample load_tile(const DatasetManifest& manifest, const TileRecord& record);

/// Writes image/mask PNGs under tiles/<key[0:2]>/<key>_{img,mask}.png, keyed by
/// the SHA-256 of the tile contents; returns the record (paths relative to root).
TileRecord store_tile(const std::filesystem::path& root, const TileSample& tile);

/// Moves round(fraction * train tiles) to val, allotting per scene by largest
/// remainder; ties and within-scene picks use `seed`.
void assign_validation_split(std::vector<TileRecord>& tiles, double fraction, std::uint64_t seed);

struct TileDirectoryOptions {
    int tile_size = 512;
    int stride = 512;
    std::set<int> building_ids{1};
    Split split = Split::train;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    NormalizationSpec normalization;
};

/// Scenes are <id>.png or <id>.tif with <id>_labels.png and optional <id>.json
/// carrying {"resolution_m": ...}.
std::vector<RasterScene> read_scene_directory(const std::filesystem::path& dir);

/// Tiles every scene in `scene_dir` into `out_dir` and writes out_dir/manifest.json.
DatasetManifest tile_directory(const std::filesystem::path& scene_dir,
                               const std::filesystem::path& out_dir,
                               const TileDirectoryOptions& options);

/// Per-channel stats of the normalized train tiles.
ChannelStats compute_dataset_stats(const DatasetManifest& manifest);

}  // namespace bseg::data
