// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bseg/data/image.hpp"
#include "bseg/data/manifest.hpp"
#include "bseg/data/raster.hpp"
#include "bseg/data/toy.hpp"
#include "bseg/util/hash.hpp"

using namespace bseg::data;
namespace fs = std::filesystem;

namespace {

RasterScene random_scene(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RasterScene s;
    s.scene_id = "s" + std::to_string(seed);
    s.image = ImageU8(h, w, 3);
    for (auto& p : s.image.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
    s.labels = LabelRaster{h, w, std::vector<std::int32_t>(static_cast<std::size_t>(h) * w)};
    for (auto& v : s.labels.ids) v = static_cast<std::int32_t>(rng() % 4);
    return s;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bseg_raster_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_digest(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    bseg::util::Sha256 h;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        h.update(fs::relative(f, root).generic_string());
        h.update(ss.str());
    }
    return h.hex_digest();
}

}  // namespace

TEST(TileScene, ExactDivisionGivesFourTiles) {
    EXPECT_EQ(tile_scene(random_scene(1024, 1024, 1), 512, 512, {1}).size(), 4u);
}

TEST(TileScene, SingleTileEqualsScene) {
    const auto s = random_scene(512, 512, 2);
    const auto tiles = tile_scene(s, 512, 512, {1});
    ASSERT_EQ(tiles.size(), 1u);
    EXPECT_EQ(tiles[0].image.pixels, s.image.pixels);
    EXPECT_EQ(tiles[0].mask, binarize_labels(s.labels.ids, {1}));
}

TEST(TileScene, EdgeClampAddsLastWindow) {
    EXPECT_EQ(window_offsets(700, 512, 256), (std::vector<int>{0, 188}));
    const auto tiles = tile_scene(random_scene(700, 700, 3), 512, 256, {1});
    EXPECT_EQ(tiles.size(), 4u);
}

TEST(TileScene, CountFormulaWhenStrideFits) {
    // (H - T) / S + 1 per axis when the windows end on the edge.
    EXPECT_EQ(tile_scene(random_scene(96, 160, 4), 32, 16, {1}).size(), 5u * 9u);
}

TEST(TileScene, SmallerSceneRejected) {
    EXPECT_THROW(tile_scene(random_scene(100, 600, 5), 512, 512, {1}), std::invalid_argument);
}

TEST(TileScene, PixelsMatchSourceWindow) {
    const auto s = random_scene(90, 70, 6);
    for (const auto& t : tile_scene(s, 32, 20, {2})) {
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                for (int c = 0; c < 3; ++c) ASSERT_EQ(t.image.at(y, x, c), s.image.at(t.row + y, t.col + x, c));
                ASSERT_EQ(t.mask[y * 32 + x], s.labels.at(t.row + y, t.col + x) == 2 ? 1 : 0);
            }
        }
    }
}

TEST(TileScene, NonOverlappingTilesReassembleLosslessly) {
    const auto s = random_scene(128, 192, 7);
    ImageU8 rebuilt(128, 192, 3);
    for (const auto& t : tile_scene(s, 64, 64, {1})) {
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                for (int c = 0; c < 3; ++c) rebuilt.at(t.row + y, t.col + x, c) = t.image.at(y, x, c);
            }
        }
    }
    EXPECT_EQ(rebuilt.pixels, s.image.pixels);
}

TEST(Binarize, MembershipExamples) {
    EXPECT_EQ(binarize_labels(std::vector<std::int32_t>{3, 7, 7, 0}, {7}), (std::vector<std::uint8_t>{0, 1, 1, 0}));
    EXPECT_EQ(binarize_labels(std::vector<std::int32_t>(9, 5), {5}), std::vector<std::uint8_t>(9, 1));
    EXPECT_EQ(binarize_labels(std::vector<std::int32_t>{1, 2, 3}, {9}), std::vector<std::uint8_t>(3, 0));
}

TEST(Binarize, Idempotent) {
    const auto s = random_scene(16, 16, 8);
    const auto once = binarize_labels(s.labels.ids, {2, 3});
    const std::vector<std::int32_t> as_ids(once.begin(), once.end());
    EXPECT_EQ(binarize_labels(as_ids, {1}), once);
}

TEST(Normalize, FormulaExamples) {
    NormalizationSpec spec;
    ImageU8 im(1, 1, 3);
    im.at(0, 0, 0) = 255;
    const auto t = normalize(im, spec);
    EXPECT_NEAR(t.at(0, 0, 0, 0), (1.0 - 0.485) / 0.229, 1e-5);
    EXPECT_NEAR(t.at(0, 0, 0, 0), 2.2489, 1e-4);
    // A unit value equal to the mean maps to zero.
    bseg::nn::Tensor u(bseg::nn::Shape{1, 3, 1, 1});
    for (int c = 0; c < 3; ++c) u.at(0, c, 0, 0) = static_cast<float>(spec.mean[c]);
    const auto z = normalize(u, spec);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(z.at(0, c, 0, 0), 0.0, 1e-7);
}

TEST(Normalize, DenormalizeInverts) {
    const auto s = random_scene(17, 13, 9);
    const auto unit = to_unit(s.image);
    const auto back = denormalize(normalize(unit, NormalizationSpec{}), NormalizationSpec{});
    for (std::size_t i = 0; i < unit.numel(); ++i) EXPECT_NEAR(back.data()[i], unit.data()[i], 1e-6);
}

TEST(Normalize, InvalidStdRejected) {
    NormalizationSpec spec;
    spec.std[1] = 0.0;
    EXPECT_THROW(validate(spec), std::invalid_argument);
}

TEST(Stats, ConstantDataIsDegenerate) {
    StatsAccumulator acc;
    acc.add(ImageU8(8, 8, 3, 100));
    const auto st = acc.finish(NormalizationSpec{});
    EXPECT_TRUE(st.degenerate);
    for (double v : st.std) EXPECT_EQ(v, 0.0);
}

TEST(Stats, MeanAtSpecIsZero) {
    NormalizationSpec spec;
    spec.mean = {100.0 / 255.0, 50.0 / 255.0, 200.0 / 255.0};
    ImageU8 im(4, 4, 3);
    for (int i = 0; i < 16; ++i) {
        im.pixels[i * 3] = static_cast<std::uint8_t>(i % 2 ? 90 : 110);
        im.pixels[i * 3 + 1] = static_cast<std::uint8_t>(i % 2 ? 40 : 60);
        im.pixels[i * 3 + 2] = static_cast<std::uint8_t>(i % 2 ? 190 : 210);
    }
    StatsAccumulator acc;
    acc.add(im);
    const auto st = acc.finish(spec);
    for (double m : st.mean) EXPECT_NEAR(m, 0.0, 1e-12);
}

TEST(Stats, MatchesPixelLoopOracleAndIsOrderIndependent) {
    const fs::path dir = temp_dir("stats");
    ToyOptions o;
    o.train_tiles = 2;
    o.test_tiles = 0;
    o.size = 32;
    o.val_fraction = 0.0;
    make_toy_dataset(dir, o);
    const auto m = load_manifest(dir / "manifest.json");
    const auto st = compute_dataset_stats(m);

    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    double n = 0;
    for (std::size_t i : m.indices(Split::train)) {
        const auto t = normalize(load_tile(m, m.tiles[i]).image, m.normalization);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < 32; ++y) {
                for (int x = 0; x < 32; ++x) {
                    const double v = t.at(0, c, y, x);
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
        }
        n += 32 * 32;
    }
    for (int c = 0; c < 3; ++c) {
        const double mean = sum[c] / n;
        EXPECT_NEAR(st.mean[c], mean, 1e-5);
        EXPECT_NEAR(st.std[c], std::sqrt(sq[c] / n - mean * mean), 1e-4);
    }

    StatsAccumulator a, b, ab, ba;
    const auto t0 = load_tile(m, m.tiles[0]).image;
    const auto t1 = load_tile(m, m.tiles[1]).image;
    a.add(t0);
    b.add(t1);
    ab = a;
    ab.merge(b);
    ba = b;
    ba.merge(a);
    EXPECT_EQ(ab.finish(m.normalization).mean, ba.finish(m.normalization).mean);
    EXPECT_EQ(ab.finish(m.normalization).std, ba.finish(m.normalization).std);
    fs::remove_all(dir);
}

TEST(Manifest, SplitsPartitionTilesAndRoundTrip) {
    const fs::path dir = temp_dir("manifest");
    ToyOptions o;
    o.train_tiles = 20;
    o.test_tiles = 5;
    o.size = 32;
    const auto ds = make_toy_dataset(dir, o);
    const auto m = load_manifest(dir / "manifest.json");
    EXPECT_EQ(m.indices(Split::train).size(), 18u);
    EXPECT_EQ(m.indices(Split::val).size(), 2u);
    EXPECT_EQ(m.indices(Split::test).size(), 5u);
    EXPECT_EQ(m.to_json(), ds.manifest.to_json());
    const auto j = m.to_json();
    EXPECT_EQ(j.at("class_map").at("1"), "building");

    // A tile listed twice in different splits is rejected.
    auto broken = m;
    auto dup = broken.tiles.front();
    dup.split = Split::test;
    broken.tiles.push_back(dup);
    save_manifest(broken, dir / "broken.json");
    EXPECT_THROW(load_manifest(dir / "broken.json"), std::exception);

    // Missing tile files are rejected at load time.
    fs::remove(dir / m.tiles.back().image_path);
    EXPECT_THROW(load_manifest(dir / "manifest.json"), std::exception);
    fs::remove_all(dir);
}

TEST(Toy, SeededGenerationIsByteIdentical) {
    const fs::path a = temp_dir("toy_a"), b = temp_dir("toy_b");
    ToyOptions o;
    o.train_tiles = 12;
    o.test_tiles = 4;
    make_toy_dataset(a, o);
    make_toy_dataset(b, o);
    EXPECT_EQ(file_digest(a), file_digest(b));
    o.seed = 8;
    const fs::path c = temp_dir("toy_c");
    make_toy_dataset(c, o);
    EXPECT_NE(file_digest(a), file_digest(c));
    for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(Toy, HalfResolutionTestTilesAreUpsampled) {
    const fs::path dir = temp_dir("toy_half");
    ToyOptions o;
    o.train_tiles = 4;
    o.test_tiles = 2;
    const auto ds = make_toy_dataset(dir, o);
    for (std::size_t i : ds.halfres.indices(Split::test)) {
        const auto t = load_tile(ds.halfres, ds.halfres.tiles[i]);
        EXPECT_EQ(t.image.height, 128);
    }
    EXPECT_EQ(ds.halfres.indices(Split::train), ds.manifest.indices(Split::train));
    fs::remove_all(dir);
}
