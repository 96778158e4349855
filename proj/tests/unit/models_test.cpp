// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "bseg/models/checkpoint.hpp"
#include "bseg/models/network.hpp"

using namespace bseg::models;
using bseg::nn::Shape;
using bseg::nn::Tensor;
namespace fs = std::filesystem;

namespace {

Tensor random_input(int n, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    Tensor t(Shape{n, 3, h, w});
    for (auto& v : t.values()) v = g(rng);
    return t;
}

std::unique_ptr<SegmentationModel> make(const std::string& enc, double width, DecoderKind kind,
                                        std::uint64_t seed = 1) {
    const auto e = encoder_by_name(enc, width);
    return build_model(e, default_decoder(kind, e), seed);
}

bool all_finite(const Tensor& t) {
    for (float v : t.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace

TEST(Models, UnetPlusPlusVgg16FullWidthShape) {
    const auto m = make("vgg16", 1.0, DecoderKind::unetpp);
    const auto out = m->predict(random_input(1, 512, 512, 1));
    EXPECT_EQ(out.shape(), (Shape{1, 1, 512, 512}));
    EXPECT_TRUE(all_finite(out));
}

TEST(Models, DeepLabResnet18Shape) {
    const auto m = make("resnet18", 1.0, DecoderKind::deeplabv3plus);
    const auto out = m->predict(random_input(1, 256, 256, 2));
    EXPECT_EQ(out.shape(), (Shape{1, 1, 256, 256}));
    for (float v : out.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(Models, EighthWidthModelsAreSmall) {
    EXPECT_LT(make("vgg16", 0.125, DecoderKind::unetpp)->parameter_count(), 1000000u);
    EXPECT_LT(make("resnet18", 0.125, DecoderKind::deeplabv3plus)->parameter_count(), 1000000u);
    EXPECT_GT(make("vgg16", 1.0, DecoderKind::unetpp)->parameter_count(),
              make("vgg16", 0.125, DecoderKind::unetpp)->parameter_count());
}

TEST(Models, DuplicateBatchRowsGiveIdenticalOutputs) {
    for (auto kind : {DecoderKind::unetpp, DecoderKind::deeplabv3plus}) {
        const auto m = make(kind == DecoderKind::unetpp ? "vgg16" : "resnet18", 0.125, kind);
        const auto one = random_input(1, 64, 64, 3);
        Tensor two(Shape{2, 3, 64, 64});
        std::copy(one.values().begin(), one.values().end(), two.values().begin());
        std::copy(one.values().begin(), one.values().end(), two.values().begin() + static_cast<long>(one.numel()));
        const auto out = m->predict(two);
        const std::size_t plane = 64 * 64;
        for (std::size_t i = 0; i < plane; ++i) ASSERT_EQ(out.data()[i], out.data()[plane + i]);
        const auto single = m->predict(one);
        for (std::size_t i = 0; i < plane; ++i) ASSERT_EQ(out.data()[i], single.data()[i]);
    }
}

TEST(Models, ZeroInputGivesFiniteOutput) {
    for (const auto& name : {"vgg16", "resnet50", "efficientnet-b0", "mobilenet-v2"}) {
        const auto m = make(name, 0.125, DecoderKind::unetpp);
        EXPECT_TRUE(all_finite(m->predict(Tensor(Shape{1, 3, 64, 64})))) << name;
    }
}

TEST(Models, SameSeedSameWeights) {
    const auto a = make("resnet18", 0.125, DecoderKind::deeplabv3plus, 9);
    const auto b = make("resnet18", 0.125, DecoderKind::deeplabv3plus, 9);
    const auto& pa = a->store().parameters();
    const auto& pb = b->store().parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i].name, pb[i].name);
        const auto& va = pa[i].var->value;
        const auto& vb = pb[i].var->value;
        ASSERT_TRUE(std::equal(va.values().begin(), va.values().end(), vb.values().begin())) << pa[i].name;
    }
}

TEST(Models, StageResolutionsHalveFromInput) {
    const auto m = make("vgg16", 0.125, DecoderKind::unetpp);
    const auto stages = m->stage_activations(random_input(1, 512, 512, 4));
    ASSERT_EQ(stages.size(), 5u);
    int expect = 256;
    for (const auto& s : stages) {
        EXPECT_EQ(s.shape().h, expect);
        EXPECT_EQ(s.shape().w, expect);
        expect /= 2;
    }
    EXPECT_EQ(stage_strides(m->built_encoder()), (std::vector<int>{2, 4, 8, 16, 32}));
}

TEST(Models, ConstantImageGivesInteriorConstantFirstStage) {
    const auto m = make("vgg16", 0.125, DecoderKind::unetpp);
    const auto s1 = m->stage_activations(Tensor(Shape{1, 3, 64, 64}, 0.7f)).front();
    const int h = s1.shape().h, w = s1.shape().w;
    // Zero padding only reaches a few pixels in from the border.
    const int margin = 3;
    for (int c = 0; c < s1.shape().c; ++c) {
        const float ref = s1.at(0, c, h / 2, w / 2);
        for (int y = margin; y < h - margin; ++y) {
            for (int x = margin; x < w - margin; ++x) ASSERT_NEAR(s1.at(0, c, y, x), ref, 1e-5f);
        }
    }
}

TEST(Models, NestedTopologyWiring) {
    const auto m = make("vgg16", 0.125, DecoderKind::unetpp);
    const auto& nodes = m->unetpp()->topology();
    EXPECT_EQ(nodes.size(), 10u);
    std::set<std::pair<int, int>> done;
    for (int i = 0; i < 5; ++i) done.insert({i, 0});
    for (const auto& n : nodes) {
        EXPECT_GE(n.column, 1);
        EXPECT_LE(n.level + n.column, 4);
        EXPECT_EQ(n.same_level_inputs.size(), static_cast<std::size_t>(n.column));
        for (int j = 0; j < n.column; ++j) {
            EXPECT_EQ(n.same_level_inputs[j], std::make_pair(n.level, j));
            EXPECT_TRUE(done.count(n.same_level_inputs[j]));
        }
        EXPECT_EQ(n.upsampled_input, std::make_pair(n.level + 1, n.column - 1));
        EXPECT_TRUE(done.count(n.upsampled_input));
        done.insert({n.level, n.column});
    }
    EXPECT_TRUE(done.count({0, 4}));
}

TEST(Models, AsppBranchWidths) {
    const auto m = make("resnet50", 0.125, DecoderKind::deeplabv3plus);
    const auto& d = m->spec().decoder;
    const auto branches = m->deeplab()->aspp_branch_channels();
    EXPECT_EQ(branches.size(), d.atrous_rates.size() + 2);
    for (int c : branches) EXPECT_EQ(c, d.aspp_channels);
    EXPECT_EQ(m->deeplab()->aspp_output_channels(), d.aspp_channels);
    EXPECT_EQ(m->required_multiple(), 16);
}

TEST(Models, ReceptiveFieldGrowsWithDepth) {
    for (const auto& name : known_encoder_names()) {
        const auto table = receptive_field_table(encoder_by_name(name));
        for (std::size_t i = 1; i < table.size(); ++i) EXPECT_GT(table[i].receptive_field, table[i - 1].receptive_field) << name;
    }
}

TEST(Models, EveryParameterReceivesGradient) {
    for (auto kind : {DecoderKind::unetpp, DecoderKind::deeplabv3plus}) {
        const auto m = make(kind == DecoderKind::unetpp ? "vgg11" : "resnet18", 0.125, kind);
        m->store().zero_grad();
        const auto x = bseg::nn::constant(random_input(2, 64, 64, 5));
        const auto y = m->forward(x, bseg::nn::Mode::train);
        std::mt19937_64 rng(6);
        std::normal_distribution<float> g(0.0f, 1.0f);
        Tensor seed(y->value.shape());
        for (auto& v : seed.values()) v = g(rng);
        bseg::nn::backward(y, seed);
        for (const auto& p : m->store().parameters()) {
            bool nonzero = false;
            for (float v : p.var->grad.values()) nonzero = nonzero || v != 0.0f;
            EXPECT_TRUE(nonzero) << p.name;
        }
    }
}

TEST(Models, IndivisibleInputRaisesPaddingError) {
    const auto m = make("vgg16", 0.125, DecoderKind::unetpp);
    try {
        (void)m->predict(random_input(1, 48, 64, 7));
        FAIL() << "expected PaddingError";
    } catch (const PaddingError& e) {
        EXPECT_EQ(e.required_multiple(), 32);
    }
}

TEST(Models, StageCountMismatchRejected) {
    const auto e = encoder_by_name("vgg16", 0.125);
    auto d = default_decoder(DecoderKind::unetpp, e);
    d.nested_depth = 4;
    d.decoder_channels.pop_back();
    EXPECT_THROW(build_model(e, d, 1), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
    const fs::path path = fs::temp_directory_path() / "bseg_models_ckpt.bin";
    const auto m = make("resnet18", 0.125, DecoderKind::deeplabv3plus, 11);
    // Move batch-norm statistics off their initial values.
    (void)m->forward(bseg::nn::constant(random_input(2, 64, 64, 8)), bseg::nn::Mode::train);
    save_checkpoint(path, *m, {{"note", "x"}});
    const auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.metadata.at("note"), "x");
    const auto input = random_input(1, 64, 64, 9);
    const auto a = m->predict(input);
    const auto b = loaded.model->predict(input);
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
    fs::remove(path);
}

TEST(Checkpoint, MismatchedSpecRejected) {
    const fs::path path = fs::temp_directory_path() / "bseg_models_ckpt_mismatch.bin";
    auto a = make("resnet18", 0.125, DecoderKind::deeplabv3plus);
    save_checkpoint(path, *a);
    auto b = make("resnet34", 0.125, DecoderKind::deeplabv3plus);
    EXPECT_THROW(load_weights(read_archive(path), *b), std::exception);
    fs::remove(path);
}
