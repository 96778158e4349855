// SPDX-License-Identifier: Apache-2.0
#include "bseg/data/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "bseg/nn/ops.hpp"

namespace bseg::data {

void validate(const ToyOptions& o) {
    if (o.size < 32) throw std::invalid_argument("toy tile size must be >= 32");
    if (o.train_tiles < 2) throw std::invalid_argument("toy dataset needs at least 2 train tiles");
    if (o.test_tiles < 0) throw std::invalid_argument("toy test tile count must be >= 0");
    if (o.halfres_factor < 1) throw std::invalid_argument("halfres factor must be >= 1");
    if (!(o.val_fraction >= 0.0 && o.val_fraction < 1.0)) {
        throw std::invalid_argument("val_fraction must lie in [0, 1)");
    }
}

namespace {

// Platform-independent draws on top of mt19937_64.
class Draw {
public:
    explicit Draw(std::seed_seq& seq) : rng_(seq) {}
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
    int integer(int lo, int hi) {  // inclusive
        return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

private:
    std::mt19937_64 rng_;
};

std::uint8_t clamp_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

struct Rect {
    int y, x, h, w;
    [[nodiscard]] bool overlaps(const Rect& o, int margin) const {
        return y - margin < o.y + o.h && o.y - margin < y + h && x - margin < o.x + o.w &&
               o.x - margin < x + w;
    }
};

}  // namespace

RasterScene make_toy_scene(std::uint64_t seed, std::uint64_t index, int size,
                           const std::string& scene_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    Draw d(seq);
    RasterScene s;
    s.scene_id = scene_id;
    s.image = ImageU8(size, size, 3);
    s.labels = LabelRaster{size, size, std::vector<std::int32_t>(static_cast<std::size_t>(size) * size, kToyGround)};

    // Ground: base colour, two low-frequency waves, per-pixel noise.
    const double base[3] = {d.uniform(70, 110), d.uniform(85, 125), d.uniform(55, 90)};
    struct Wave {
        double fy, fx, phase, amp;
    };
    Wave waves[2];
    for (auto& w : waves) {
        w = {d.uniform(0.02, 0.12), d.uniform(0.02, 0.12), d.uniform(0, 6.2832), d.uniform(5, 15)};
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double shade = 0.0;
            for (const auto& w : waves) shade += w.amp * std::sin(w.fy * y + w.fx * x + w.phase);
            for (int c = 0; c < 3; ++c) {
                s.image.at(y, x, c) = clamp_byte(base[c] + shade + d.uniform(-12, 12));
            }
        }
    }

    // Buildings.
    std::vector<Rect> placed;
    const int buildings = d.integer(1, 4);
    for (int b = 0; b < buildings; ++b) {
        for (int attempt = 0; attempt < 40; ++attempt) {
            const int h = d.integer(6, 20);
            const int w = d.integer(6, 20);
            const Rect r{d.integer(0, size - h), d.integer(0, size - w), h, w};
            if (std::any_of(placed.begin(), placed.end(), [&](const Rect& o) { return r.overlaps(o, 2); })) {
                continue;
            }
            placed.push_back(r);
            const double grey = d.uniform(175, 235);
            const double tint[3] = {d.uniform(-15, 15), d.uniform(-15, 15), d.uniform(-15, 15)};
            for (int y = r.y; y < r.y + r.h; ++y) {
                for (int x = r.x; x < r.x + r.w; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        s.image.at(y, x, c) = clamp_byte(grey + tint[c] + d.uniform(-6, 6));
                    }
                    s.labels.ids[static_cast<std::size_t>(y) * size + x] = kToyBuilding;
                }
            }
            break;
        }
    }

    // Clutter: small squares as bright as roofs.
    const int cars = d.integer(0, 4);
    for (int k = 0; k < cars; ++k) {
        for (int attempt = 0; attempt < 40; ++attempt) {
            const int side = d.integer(2, 4);
            const Rect r{d.integer(0, size - side), d.integer(0, size - side), side, side};
            if (std::any_of(placed.begin(), placed.end(), [&](const Rect& o) { return r.overlaps(o, 2); })) {
                continue;
            }
            placed.push_back(r);
            const double grey = d.uniform(175, 235);
            for (int y = r.y; y < r.y + side; ++y) {
                for (int x = r.x; x < r.x + side; ++x) {
                    for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = clamp_byte(grey + d.uniform(-6, 6));
                    s.labels.ids[static_cast<std::size_t>(y) * size + x] = kToyCar;
                }
            }
            break;
        }
    }
    return s;
}

RasterScene upsample_scene(const RasterScene& scene, int factor) {
    if (factor == 1) return scene;
    const int h = scene.image.height * factor;
    const int w = scene.image.width * factor;
    RasterScene out;
    out.scene_id = scene.scene_id;
    if (scene.resolution_m) out.resolution_m = *scene.resolution_m / factor;
    out.image = to_image(nn::resize_bilinear(to_unit(scene.image), h, w));
    out.labels = LabelRaster{h, w, std::vector<std::int32_t>(static_cast<std::size_t>(h) * w)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.labels.ids[static_cast<std::size_t>(y) * w + x] = scene.labels.at(y / factor, x / factor);
        }
    }
    return out;
}

ToyDataset make_toy_dataset(const std::filesystem::path& out_dir, const ToyOptions& o) {
    validate(o);
    const std::set<int> building{kToyBuilding};
    constexpr double kResolution = 0.6;
    ToyDataset ds;
    for (DatasetManifest* m : {&ds.manifest, &ds.halfres}) {
        m->tile_size = o.size;
        m->stride = o.size;
        m->building_ids = building;
        m->validation.fraction = o.val_fraction;
        m->validation.seed = o.seed;
        m->root = out_dir;
    }
    auto add = [&](DatasetManifest& m, const RasterScene& scene, Split split) {
        m.scenes.push_back({scene.scene_id, scene.image.height, scene.image.width, scene.resolution_m});
        for (auto& tile : tile_scene(scene, scene.image.height, scene.image.height, building)) {
            tile.split = split;
            m.tiles.push_back(store_tile(out_dir, tile));
        }
    };
    char id[32];
    for (int i = 0; i < o.train_tiles; ++i) {
        std::snprintf(id, sizeof(id), "train_%04d", i);
        RasterScene s = make_toy_scene(o.seed, static_cast<std::uint64_t>(i), o.size, id);
        s.resolution_m = kResolution;
        add(ds.manifest, s, Split::train);
    }
    assign_validation_split(ds.manifest.tiles, o.val_fraction, o.seed);
    ds.halfres.scenes = ds.manifest.scenes;
    ds.halfres.tiles = ds.manifest.tiles;
    for (int i = 0; i < o.test_tiles; ++i) {
        std::snprintf(id, sizeof(id), "test_%04d", i);
        // Offset the stream index so test scenes never repeat train scenes.
        RasterScene s = make_toy_scene(o.seed, (1ULL << 32) + static_cast<std::uint64_t>(i), o.size, id);
        s.resolution_m = kResolution;
        add(ds.manifest, s, Split::test);
        add(ds.halfres, upsample_scene(s, o.halfres_factor), Split::test);
    }
    save_manifest(ds.manifest, out_dir / "manifest.json");
    save_manifest(ds.halfres, out_dir / "manifest_halfres.json");
    return ds;
}

}  // namespace bseg::data
