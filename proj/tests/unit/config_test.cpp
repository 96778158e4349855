// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bseg/config.hpp"

using namespace bseg::config;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"({
  "data": {"manifest": "toy/manifest.json"},
  "model": {"encoder": "vgg16", "width_multiplier": 0.125, "decoder": "unetpp"},
  "loss": {"kind": "weighted_dice"},
  "trainer": {"max_epochs": 3, "seed": 4}
})";

int error_line(const std::string& text, std::string* field = nullptr) {
    try {
        (void)parse_experiment(text, "/cfg");
    } catch (const ConfigError& e) {
        if (field) *field = e.field();
        return e.line();
    }
    return -1;
}

}  // namespace

TEST(Config, ParsesMinimalExperiment) {
    const auto c = parse_experiment(kBase, "/cfg");
    EXPECT_EQ(c.data.manifest, fs::path("/cfg/toy/manifest.json"));
    EXPECT_EQ(c.data.eval_split, "test");
    EXPECT_EQ(c.model.encoder.family, bseg::models::EncoderFamily::vgg);
    EXPECT_EQ(c.model.encoder.variant, "16");
    EXPECT_EQ(c.model.decoder.kind, bseg::models::DecoderKind::unetpp);
    EXPECT_EQ(c.loss.kind, bseg::losses::LossKind::weighted_dice);
    EXPECT_EQ(c.trainer.max_epochs, 3);
    EXPECT_EQ(c.trainer.seed, 4u);
    EXPECT_EQ(c.trainer.batch_size, 8);
    EXPECT_DOUBLE_EQ(c.trainer.learning_rate, 1e-4);
    EXPECT_TRUE(c.augment);
    EXPECT_FALSE(c.tta.has_value());
}

TEST(Config, UnknownKeyReportsLineAndField) {
    const std::string text = R"({
  "data": {"manifest": "m.json"},
  "model": {"encoder": "vgg16", "decoder": "unetpp"},
  "loss": {"kind": "dice"},
  "trainer": {
    "max_epochs": 3,
    "learning_rat": 0.001
  }
})";
    std::string field;
    EXPECT_EQ(error_line(text, &field), 7);
    EXPECT_EQ(field, "trainer.learning_rat");
}

TEST(Config, InvalidValueReportsLineAndField) {
    const std::string text = R"({
  "data": {"manifest": "m.json"},
  "model": {"encoder": "vgg16", "decoder": "unetpp"},
  "loss": {
    "kind": "tversky",
    "alpha": 0.4,
    "beta": 0.5
  },
  "trainer": {"max_epochs": 3}
})";
    std::string field;
    const int line = error_line(text, &field);
    EXPECT_GE(line, 4);
    EXPECT_LE(line, 7);
    EXPECT_EQ(field.rfind("loss", 0), 0u);
}

TEST(Config, MessageNamesLineAndField) {
    const ConfigError e("trainer.batch_size", 12, "must be >= 1");
    EXPECT_EQ(std::string(e.what()), "config error at line 12 in field 'trainer.batch_size': must be >= 1");
}

TEST(Config, RejectsBadTypesAndEnums) {
    std::string field;
    EXPECT_GT(error_line(R"({"data": {"manifest": "m"}, "model": {"encoder": "vgg99", "decoder": "unetpp"},
"loss": {"kind": "dice"}, "trainer": {}})", &field), 0);
    EXPECT_EQ(field.rfind("model", 0), 0u);
    EXPECT_GT(error_line(R"({"data": {"manifest": "m"}, "model": {"encoder": "vgg16", "decoder": "unetpp"},
"loss": {"kind": "dice"}, "trainer": {"batch_size": "eight"}})", &field), 0);
    EXPECT_EQ(field, "trainer.batch_size");
    EXPECT_GT(error_line(R"({"data": {"manifest": "m"}, "model": {"encoder": "vgg16", "decoder": "unetpp"},
"loss": {"kind": "dice"}, "trainer": {"selection_metric": "val_loss"}})", &field), 0);
    EXPECT_EQ(field, "trainer.selection_metric");
}

TEST(Config, MalformedJsonIsConfigError) {
    EXPECT_THROW(parse_experiment("{\"data\": ", "/cfg"), ConfigError);
}

TEST(Config, CanonicalRoundTrip) {
    const auto c = parse_experiment(kBase, "/cfg");
    const auto j = to_json(c);
    const auto back = experiment_from_json(j, "/cfg");
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, HashIgnoresFormattingButTracksContent) {
    const std::string reformatted =
        R"({"trainer": {"seed": 4, "max_epochs": 3}, "loss": {"kind": "weighted_dice"},
            "model": {"decoder": "unetpp", "width_multiplier": 0.125, "encoder": "vgg16"},
            "data": {"manifest": "toy/manifest.json"}})";
    const auto h = config_hash(parse_experiment(kBase, "/cfg"));
    EXPECT_EQ(h.size(), 64u);
    EXPECT_EQ(h, config_hash(parse_experiment(reformatted, "/cfg")));
    auto changed = parse_experiment(kBase, "/cfg");
    changed.trainer.seed = 5;
    EXPECT_NE(h, config_hash(changed));
}

TEST(Config, TtaAndAugmentationSections) {
    const std::string text = R"({
  "data": {"manifest": "m.json"},
  "model": {"encoder": "resnet18", "decoder": "deeplabv3plus"},
  "loss": {"kind": "focal_tversky", "gamma": 1.5},
  "augmentation": {"enabled": true, "apply_probability": 0.25, "epoch_max": 10},
  "tta": {"preset": "method3"},
  "trainer": {"lr_schedule": "cosine"}
})";
    const auto c = parse_experiment(text, "/cfg");
    ASSERT_TRUE(c.tta.has_value());
    EXPECT_EQ(c.tta->size(), 12u);
    EXPECT_DOUBLE_EQ(c.augmentation.apply_probability, 0.25);
    EXPECT_EQ(c.augmentation.schedule.epoch_max, 10);
    EXPECT_EQ(c.trainer.lr_schedule, LrSchedule::cosine);
    EXPECT_DOUBLE_EQ(c.loss.gamma, 1.5);
}

TEST(Config, LoadResolvesManifestAgainstFile) {
    const fs::path dir = fs::temp_directory_path() / "bseg_config_load";
    fs::create_directories(dir);
    std::ofstream(dir / "exp.json") << kBase;
    const auto c = load_experiment(dir / "exp.json");
    EXPECT_EQ(c.data.manifest.lexically_normal(), (dir / "toy/manifest.json").lexically_normal());
    EXPECT_THROW(load_experiment(dir / "missing.json"), ConfigError);
    fs::remove_all(dir);
}
