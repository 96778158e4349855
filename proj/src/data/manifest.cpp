// SPDX-License-Identifier: Apache-2.0
#include "bseg/data/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "bseg/util/hash.hpp"

namespace bseg::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (tiles[i].split == split) out.push_back(i);
    }
    return out;
}

json DatasetManifest::to_json() const {
    json class_map = json::object();
    for (int id : building_ids) class_map[std::to_string(id)] = "building";
    class_map["*"] = "not-building";
    json scene_list = json::array();
    for (const auto& s : scenes) {
        json j{{"scene_id", s.scene_id}, {"height", s.height}, {"width", s.width}};
        j["resolution_m"] = s.resolution_m ? json(*s.resolution_m) : json(nullptr);
        scene_list.push_back(j);
    }
    json tile_list = json::array();
    for (const auto& t : tiles) {
        tile_list.push_back(json{{"image", t.image_path},
                                 {"mask", t.mask_path},
                                 {"scene_id", t.scene_id},
                                 {"row", t.row},
                                 {"col", t.col},
                                 {"split", to_string(t.split)}});
    }
    return json{{"version", version},
                {"tile_size", tile_size},
                {"stride", stride},
                {"normalization",
                 {{"mean", normalization.mean}, {"std", normalization.std}}},
                {"class_map", class_map},
                {"validation",
                 {{"fraction", validation.fraction},
                  {"seed", validation.seed},
                  {"method", validation.method}}},
                {"scenes", scene_list},
                {"tiles", tile_list}};
}

DatasetManifest DatasetManifest::from_json(const json& j, const fs::path& root) {
    DatasetManifest m;
    m.root = root;
    m.version = j.value("version", 1);
    m.tile_size = j.at("tile_size").get<int>();
    m.stride = j.value("stride", m.tile_size);
    if (j.contains("normalization")) {
        m.normalization.mean = j["normalization"].at("mean").get<std::array<double, 3>>();
        m.normalization.std = j["normalization"].at("std").get<std::array<double, 3>>();
    }
    validate(m.normalization);
    m.building_ids.clear();
    for (const auto& [key, value] : j.at("class_map").items()) {
        if (key != "*" && value.get<std::string>() == "building") m.building_ids.insert(std::stoi(key));
    }
    if (j.contains("validation")) {
        m.validation.fraction = j["validation"].value("fraction", 0.1);
        m.validation.seed = j["validation"].value("seed", std::uint64_t{0});
        m.validation.method = j["validation"].value("method", m.validation.method);
    }
    for (const auto& s : j.value("scenes", json::array())) {
        SceneRecord r{s.at("scene_id").get<std::string>(), s.value("height", 0), s.value("width", 0),
                      std::nullopt};
        if (s.contains("resolution_m") && !s["resolution_m"].is_null()) {
            r.resolution_m = s["resolution_m"].get<double>();
        }
        m.scenes.push_back(r);
    }
    for (const auto& t : j.at("tiles")) {
        m.tiles.push_back({t.at("image").get<std::string>(), t.at("mask").get<std::string>(),
                           t.value("scene_id", std::string()), t.value("row", 0), t.value("col", 0),
                           split_from_string(t.at("split").get<std::string>())});
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << manifest.to_json().dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    DatasetManifest m = DatasetManifest::from_json(j, path.parent_path());
    std::map<std::string, Split> seen;
    for (const auto& t : m.tiles) {
        for (const auto* rel : {&t.image_path, &t.mask_path}) {
            if (!fs::exists(m.root / *rel)) {
                throw std::runtime_error(path.string() + ": missing tile file " + *rel);
            }
        }
        const auto [it, inserted] = seen.emplace(t.image_path, t.split);
        if (!inserted && it->second != t.split) {
            throw std::runtime_error(path.string() + ": tile " + t.image_path +
                                     " appears in splits " + to_string(it->second) + " and " +
                                     to_string(t.split));
        }
    }
    return m;
}

TileSample load_tile(const DatasetManifest& manifest, const TileRecord& record) {
    TileSample t;
    t.image = read_rgb(manifest.root / record.image_path);
    int h = 0, w = 0;
    t.mask = read_mask(manifest.root / record.mask_path, &h, &w);
    if (h != t.image.height || w != t.image.width) {
        throw std::runtime_error("tile " + record.image_path + ": mask dims differ from image");
    }
    t.scene_id = record.scene_id;
    t.row = record.row;
    t.col = record.col;
    t.split = record.split;
    return t;
}

TileRecord store_tile(const fs::path& root, const TileSample& tile) {
    util::Sha256 h;
    h.update(std::to_string(tile.image.height) + "x" + std::to_string(tile.image.width) + ";");
    h.update(tile.image.pixels);
    h.update(tile.mask);
    const std::string key = h.hex_digest();
    const std::string dir = "tiles/" + key.substr(0, 2) + "/";
    TileRecord r{dir + key + "_img.png", dir + key + "_mask.png", tile.scene_id, tile.row, tile.col,
                 tile.split};
    write_png(root / r.image_path, tile.image);
    write_mask_png(root / r.mask_path, tile.mask, tile.image.height, tile.image.width);
    return r;
}

void assign_validation_split(std::vector<TileRecord>& tiles, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("validation fraction must lie in [0, 1)");
    }
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> by_scene;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (tiles[i].split != Split::train) continue;
        auto& v = by_scene[tiles[i].scene_id];
        if (v.empty()) order.push_back(tiles[i].scene_id);
        v.push_back(i);
    }
    std::size_t total = 0;
    for (const auto& [_, v] : by_scene) total += v.size();
    const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));

    std::mt19937_64 rng(seed);
    struct Quota {
        std::string scene;
        std::size_t count;
        double remainder;
        std::uint64_t tie;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& s : order) {
        const double q = fraction * static_cast<double>(by_scene[s].size());
        const auto fl = static_cast<std::size_t>(std::floor(q));
        quotas.push_back({s, fl, q - static_cast<double>(fl), rng()});
        assigned += fl;
    }
    std::vector<std::size_t> rank(quotas.size());
    for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        if (quotas[a].remainder != quotas[b].remainder) return quotas[a].remainder > quotas[b].remainder;
        return quotas[a].tie < quotas[b].tie;
    });
    for (std::size_t k = 0; assigned < target && k < rank.size(); ++k, ++assigned) {
        ++quotas[rank[k]].count;
    }
    for (const auto& q : quotas) {
        std::vector<std::size_t> pool = by_scene[q.scene];
        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng() % i]);
        for (std::size_t k = 0; k < q.count && k < pool.size(); ++k) tiles[pool[k]].split = Split::val;
    }
}

std::vector<RasterScene> read_scene_directory(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("scene directory not found: " + dir.string());
    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(dir)) {
        const fs::path p = e.path();
        const std::string ext = p.extension().string();
        const std::string stem = p.stem().string();
        if (ext != ".png" && ext != ".tif" && ext != ".tiff") continue;
        if (stem.size() >= 7 && stem.compare(stem.size() - 7, 7, "_labels") == 0) continue;
        images.push_back(p);
    }
    std::sort(images.begin(), images.end());
    std::vector<RasterScene> scenes;
    for (const auto& p : images) {
        RasterScene s;
        s.scene_id = p.stem().string();
        s.image = read_rgb(p);
        fs::path labels = dir / (s.scene_id + "_labels.png");
        if (!fs::exists(labels)) labels = dir / (s.scene_id + "_labels.tif");
        if (!fs::exists(labels)) {
            throw std::runtime_error("scene " + s.scene_id + " has no _labels.png sidecar");
        }
        s.labels = read_labels(labels);
        const fs::path meta = dir / (s.scene_id + ".json");
        if (fs::exists(meta)) {
            std::ifstream in(meta);
            const json j = json::parse(in);
            if (j.contains("resolution_m")) s.resolution_m = j["resolution_m"].get<double>();
        }
        validate(s);
        scenes.push_back(std::move(s));
    }
    if (scenes.empty()) throw std::runtime_error("no scenes found in " + dir.string());
    return scenes;
}

DatasetManifest tile_directory(const fs::path& scene_dir, const fs::path& out_dir,
                               const TileDirectoryOptions& options) {
    validate(options.normalization);
    DatasetManifest m;
    m.tile_size = options.tile_size;
    m.stride = options.stride;
    m.building_ids = options.building_ids;
    m.normalization = options.normalization;
    m.validation.fraction = options.split == Split::train ? options.val_fraction : 0.0;
    m.validation.seed = options.seed;
    m.root = out_dir;
    for (const auto& scene : read_scene_directory(scene_dir)) {
        m.scenes.push_back({scene.scene_id, scene.image.height, scene.image.width, scene.resolution_m});
        for (auto& tile : tile_scene(scene, options.tile_size, options.stride, options.building_ids)) {
            tile.split = options.split;
            m.tiles.push_back(store_tile(out_dir, tile));
        }
    }
    if (options.split == Split::train) {
        assign_validation_split(m.tiles, options.val_fraction, options.seed);
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

ChannelStats compute_dataset_stats(const DatasetManifest& manifest) {
    const auto train = manifest.indices(Split::train);
    if (train.empty()) throw std::invalid_argument("dataset stats: manifest has no train tiles");
    StatsAccumulator acc;
    for (std::size_t i : train) acc.add(read_rgb(manifest.root / manifest.tiles[i].image_path));
    return acc.finish(manifest.normalization);
}

}  // namespace bseg::data
