// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "bseg/data/raster.hpp"
#include "bseg/models/network.hpp"
#include "bseg/tta.hpp"

using namespace bseg::tta;
using bseg::nn::Shape;
using bseg::nn::Tensor;

namespace {

Tensor random_map(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t(Shape{1, c, h, w});
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// Low-frequency pattern that survives a 2x down and up sampling.
Tensor smooth_map(int h, int w) {
    Tensor t(Shape{1, 1, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            t.at(0, 0, y, x) = static_cast<float>(0.5 + 0.3 * std::sin(2 * std::numbers::pi * x / w) *
                                                          std::cos(2 * std::numbers::pi * y / h));
        }
    }
    return t;
}

std::unique_ptr<bseg::models::SegmentationModel> small_model() {
    const auto enc = bseg::models::vgg_encoder(16, 0.125);
    return bseg::models::build_model(enc, bseg::models::default_decoder(bseg::models::DecoderKind::unetpp, enc), 3);
}

void expect_equal(const Tensor& a, const Tensor& b) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]) << i;
}

}  // namespace

TEST(TtaPlan, PresetSizes) {
    EXPECT_EQ(preset("method1").size(), 12u);
    EXPECT_EQ(preset("method2").size(), 48u);
    EXPECT_EQ(preset("method3").size(), 12u);
    for (const auto& name : preset_names()) {
        const auto vs = preset(name).variants();
        EXPECT_TRUE(std::any_of(vs.begin(), vs.end(), [](const Variant& v) { return v.identity(); })) << name;
    }
}

TEST(TtaPlan, UnknownPresetListsValidNames) {
    try {
        preset("method9");
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("method1, method2, method3"), std::string::npos);
    }
}

TEST(TtaPlan, CanonicalAddsIdentityAndDeduplicates) {
    TtaPlan p;
    p.rotation_degrees = {180, 90, 90};
    p.scale_factors = {0.5};
    const auto c = p.canonical();
    EXPECT_EQ(c.rotation_degrees, (std::vector<int>{0, 90, 180}));
    EXPECT_EQ(c.scale_factors, (std::vector<double>{0.5, 1.0}));
    EXPECT_EQ(p.size(), 6u);
}

TEST(TtaPlan, VariantsAreFlipMajor) {
    TtaPlan p;
    p.flip_options = {false, true};
    p.multipliers = {1.0, 1.2};
    const auto vs = p.variants();
    ASSERT_EQ(vs.size(), 4u);
    EXPECT_FALSE(vs[0].hflip);
    EXPECT_FALSE(vs[1].hflip);
    EXPECT_EQ(vs[1].multiplier, 1.2);
    EXPECT_TRUE(vs[2].hflip);
}

TEST(TtaPlan, InvalidPlansRejected) {
    TtaPlan p;
    p.rotation_degrees = {45};
    EXPECT_THROW(validate(p), std::invalid_argument);
    p = TtaPlan{};
    p.scale_factors = {0.0};
    EXPECT_THROW(validate(p), std::invalid_argument);
    p = TtaPlan{};
    p.merge = "max";
    EXPECT_THROW(validate(p), std::invalid_argument);
}

TEST(TtaPlan, JsonRoundTrip) {
    const auto p = preset("method2");
    const auto j = to_json(p);
    EXPECT_EQ(to_json(plan_from_json(j)), j);
    EXPECT_EQ(plan_from_json(j).variants(), p.variants());
}

TEST(TtaPlan, MultiscaleReduction) {
    const auto vs = multiscale_plan({0.5, 0.75, 1.0}).variants();
    ASSERT_EQ(vs.size(), 3u);
    for (const auto& v : vs) {
        EXPECT_FALSE(v.hflip);
        EXPECT_EQ(v.rotation, 0);
        EXPECT_EQ(v.multiplier, 1.0);
    }
    EXPECT_EQ(vs[0].scale, 0.5);
    EXPECT_EQ(vs[2].scale, 1.0);
}

TEST(TtaTransforms, RescaledExtentSnapsToMultiple) {
    EXPECT_EQ(rescaled_extent(64, 0.75, 16), 48);
    EXPECT_EQ(rescaled_extent(64, 0.5, 32), 32);
    EXPECT_EQ(rescaled_extent(100, 0.5, 16), 48);
    EXPECT_THROW(rescaled_extent(64, 0.1, 32), std::invalid_argument);
}

TEST(TtaTransforms, RotateHalfTurnTwiceIsIdentity) {
    const auto t = random_map(2, 9, 13, 1);
    expect_equal(rotate_cw(rotate_cw(t, 180), 180), t);
    expect_equal(rotate_cw(rotate_cw(rotate_cw(rotate_cw(t, 90), 90), 90), 90), t);
    EXPECT_EQ(rotate_cw(t, 90).shape(), (Shape{1, 2, 13, 9}));
}

TEST(TtaTransforms, RotateClockwiseOrientation) {
    Tensor t(Shape{1, 1, 2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
    // 1 2 3      4 1
    // 4 5 6  ->  5 2
    //            6 3
    expect_equal(rotate_cw(t, 90), Tensor(Shape{1, 1, 3, 2}, std::vector<float>{4, 1, 5, 2, 6, 3}));
}

TEST(TtaTransforms, UnitMultiplierIsIdentity) {
    const auto t = random_map(3, 16, 16, 2);
    Variant v;
    v.multiplier = 1.0;
    expect_equal(apply_forward(t, v, 16), t);
}

TEST(TtaTransforms, MultiplierClampsToUnitRange) {
    const auto t = random_map(3, 8, 8, 3);
    Variant v;
    v.multiplier = 1.5;
    const auto out = apply_forward(t, v, 8);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        EXPECT_FLOAT_EQ(out.data()[i], std::min(1.0f, t.data()[i] * 1.5f));
    }
}

TEST(TtaTransforms, PermutationVariantsInvertExactly) {
    const auto t = random_map(1, 16, 16, 4);
    for (bool f : {false, true}) {
        for (int r : {0, 90, 180, 270}) {
            Variant v;
            v.hflip = f;
            v.rotation = r;
            expect_equal(invert_prediction(apply_forward(t, v, 16), v, 16, 16), t);
        }
    }
}

TEST(TtaTransforms, RescaleRoundTripOnSmoothImage) {
    const auto t = smooth_map(64, 64);
    Variant v;
    v.scale = 0.5;
    const auto small = apply_forward(t, v, 16);
    EXPECT_EQ(small.shape(), (Shape{1, 1, 32, 32}));
    const auto back = invert_prediction(small, v, 64, 64);
    double mae = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) mae += std::abs(back.data()[i] - t.data()[i]);
    EXPECT_LT(mae / static_cast<double>(t.numel()), 0.02);
}

TEST(TtaMerge, MeanOfTwoMaps) {
    const auto m = merge_mean({Tensor(Shape{1, 1, 2, 2}, 0.2f), Tensor(Shape{1, 1, 2, 2}, 0.8f)});
    for (float v : m.values()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(TtaMerge, StaysWithinPerPixelBounds) {
    std::vector<Tensor> maps;
    for (int i = 0; i < 7; ++i) maps.push_back(random_map(1, 8, 8, 10 + i));
    const auto m = merge_mean(maps);
    for (std::size_t i = 0; i < m.numel(); ++i) {
        float lo = 1.0f, hi = 0.0f;
        for (const auto& t : maps) {
            lo = std::min(lo, t.data()[i]);
            hi = std::max(hi, t.data()[i]);
        }
        EXPECT_GE(m.data()[i], lo);
        EXPECT_LE(m.data()[i], hi);
    }
}

TEST(TtaMerge, DuplicatesActAsWeights) {
    const auto a = random_map(1, 6, 6, 20), b = random_map(1, 6, 6, 21);
    const auto m = merge_mean({a, a, b});
    for (std::size_t i = 0; i < m.numel(); ++i) {
        EXPECT_NEAR(m.data()[i], (2.0 * a.data()[i] + b.data()[i]) / 3.0, 1e-6);
    }
}

TEST(TtaMerge, MismatchedShapesRejected) {
    EXPECT_THROW(merge_mean({Tensor(Shape{1, 1, 2, 2}), Tensor(Shape{1, 1, 3, 2})}), std::invalid_argument);
    EXPECT_THROW(merge_mean({}), std::invalid_argument);
}

TEST(TtaPredict, IdentityPlanMatchesPlainPrediction) {
    const auto model = small_model();
    const auto img = random_map(3, 32, 32, 30);
    const bseg::data::NormalizationSpec norm;
    const auto plain = model->predict(bseg::data::normalize(img, norm));
    expect_equal(tta_predict(*model, img, identity_plan(), norm), plain);
}

TEST(TtaPredict, FlipVariantIsEquivariantWrapper) {
    const auto model = small_model();
    const auto img = random_map(3, 32, 32, 31);
    const bseg::data::NormalizationSpec norm;
    Variant v;
    v.hflip = true;
    const auto got = tta_predict(*model, img, std::vector<Variant>{v}, norm);
    const auto want = hflip(model->predict(bseg::data::normalize(hflip(img), norm)));
    expect_equal(got, want);
}

TEST(TtaPredict, MergedPresetStaysInUnitRange) {
    const auto model = small_model();
    const auto img = random_map(3, 32, 32, 32);
    const auto out = tta_predict(*model, img, preset("method1"), bseg::data::NormalizationSpec{});
    EXPECT_EQ(out.shape(), (Shape{1, 1, 32, 32}));
    for (float v : out.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}
