// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "bseg/util/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(BSEG_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (const std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string tree_digest(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    bseg::util::Sha256 h;
    for (const auto& f : files) {
        h.update(fs::relative(f, root).generic_string());
        h.update(read(f));
    }
    return h.hex_digest();
}

class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "bseg_cli_test";
        fs::remove_all(root_);
        fs::create_directories(root_);
        const auto r = cli("make-toy-dataset --tiles 12 --test-tiles 3 --size 32 --out " + (root_ / "toy").string());
        ASSERT_EQ(r.code, 0) << r.output;
        write_config(root_ / "exp.json");
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static void write_config(const fs::path& path) {
        std::ofstream(path) << R"({
  "data": {"manifest": "toy/manifest.json"},
  "model": {"encoder": "vgg11", "width_multiplier": 0.125, "decoder": "unetpp"},
  "loss": {"kind": "dice"},
  "trainer": {"max_epochs": 1, "batch_size": 4, "learning_rate": 0.001, "seed": 2}
})";
    }

    static fs::path path(const std::string& name) { return root_ / name; }

    static inline fs::path root_;
};

}  // namespace

TEST(Cli, ReceptiveFieldCommand) {
    auto r = cli("rf --encoder vgg16");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.output.find("vgg16 receptive field: 212"), std::string::npos) << r.output;
    r = cli("rf --encoder resnet50");
    EXPECT_NE(r.output.find("resnet50 receptive field: 483"), std::string::npos) << r.output;
    r = cli("rf --encoder vgg99");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("vgg16"), std::string::npos);
}

TEST(Cli, UnknownCommandIsUsageError) { EXPECT_EQ(cli("frobnicate").code, 2); }

TEST_F(CliTest, ToyDatasetIsReproducible) {
    const auto again = path("toy_again");
    ASSERT_EQ(cli("make-toy-dataset --tiles 12 --test-tiles 3 --size 32 --out " + again.string()).code, 0);
    EXPECT_EQ(tree_digest(path("toy")), tree_digest(again));
}

TEST_F(CliTest, BadConfigExitsWithDiagnostic) {
    std::ofstream(path("bad.json")) << R"({
  "data": {"manifest": "toy/manifest.json"},
  "model": {"encoder": "vgg11", "decoder": "unetpp"},
  "loss": {"kind": "dice", "smoothing": -1, "colour": 1},
  "trainer": {}
})";
    const auto out = path("bad_run");
    const auto r = cli("train --config " + path("bad.json").string() + " --out " + out.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("line 4"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("loss."), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, FailedRunLeavesNoPartialOutputs) {
    // 48 px tiles are not a multiple of the VGG stride, so training fails after setup.
    ASSERT_EQ(cli("make-toy-dataset --tiles 10 --test-tiles 1 --size 48 --out " + path("toy48").string()).code, 0);
    std::ofstream(path("exp48.json")) << R"({
  "data": {"manifest": "toy48/manifest.json"},
  "model": {"encoder": "vgg11", "width_multiplier": 0.125, "decoder": "unetpp"},
  "loss": {"kind": "dice"},
  "trainer": {"max_epochs": 1}
})";
    const auto out = path("run48");
    const auto r = cli("train --config " + path("exp48.json").string() + " --out " + out.string());
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("multiple of 32"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, TrainPredictEvaluateAgree) {
    const auto run = path("run");
    auto r = cli("train --config " + path("exp.json").string() + " --out " + run.string());
    ASSERT_EQ(r.code, 0) << r.output;
    for (const char* f : {"config.json", "history.csv", "timing.csv", "best.ckpt", "report.json"}) {
        EXPECT_TRUE(fs::exists(run / f)) << f;
    }
    const auto ckpt = (run / "best.ckpt").string();
    const auto manifest = (path("toy") / "manifest.json").string();

    r = cli("predict --model " + ckpt + " --manifest " + manifest + " --split test --out " + path("pred").string());
    ASSERT_EQ(r.code, 0) << r.output;
    r = cli("evaluate --pred-dir " + (path("pred") / "masks").string() + " --manifest " + manifest +
             " --split test --out " + path("from_masks.json").string() + " --csv " + path("per_image.csv").string());
    ASSERT_EQ(r.code, 0) << r.output;
    r = cli("evaluate --model " + ckpt + " --manifest " + manifest + " --split test --out " +
             path("from_model.json").string());
    ASSERT_EQ(r.code, 0) << r.output;

    const auto a = json::parse(read(path("from_masks.json")));
    const auto b = json::parse(read(path("from_model.json")));
    const auto trained = json::parse(read(run / "report.json"));
    EXPECT_EQ(a.at("counts"), b.at("counts"));
    EXPECT_EQ(a.at("miou"), b.at("miou"));
    EXPECT_EQ(b.at("counts"), trained.at("counts"));
    const auto csv = read(path("per_image.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST_F(CliTest, RerunReproducesHashAndReport) {
    const auto a = path("rerun_a"), b = path("rerun_b");
    ASSERT_EQ(cli("train --config " + path("exp.json").string() + " --out " + a.string()).code, 0);
    ASSERT_EQ(cli("train --config " + path("exp.json").string() + " --out " + b.string()).code, 0);
    const auto ca = json::parse(read(a / "config.json")), cb = json::parse(read(b / "config.json"));
    EXPECT_EQ(ca.at("config_hash"), cb.at("config_hash"));
    EXPECT_EQ(read(a / "history.csv"), read(b / "history.csv"));
    EXPECT_EQ(read(a / "report.json"), read(b / "report.json"));
    const auto rep = json::parse(read(a / "report.json"));
    EXPECT_EQ(rep.at("fingerprint").get<std::string>().rfind(ca.at("config_hash").get<std::string>(), 0), 0u);
}

TEST_F(CliTest, TtaEvaluateWritesComparison) {
    const auto run = path("tta_run");
    ASSERT_EQ(cli("train --config " + path("exp.json").string() + " --out " + run.string()).code, 0);
    const auto out = path("tta_out");
    const auto r = cli("tta-evaluate --model " + (run / "best.ckpt").string() + " --preset method1 --manifest " +
                        (path("toy") / "manifest.json").string() + " --out " + out.string() + " --panel 2");
    ASSERT_EQ(r.code, 0) << r.output;
    for (const char* f : {"no_tta.json", "tta.json", "comparison.json", "panel.png"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    const auto cmp = json::parse(read(out / "comparison.json"));
    EXPECT_NEAR(cmp.at("delta_miou").get<double>(),
                cmp.at("tta").at("miou").get<double>() - cmp.at("no_tta").at("miou").get<double>(), 1e-12);
    EXPECT_NE(cli("tta-evaluate --model " + (run / "best.ckpt").string() + " --preset method7 --manifest " +
                   (path("toy") / "manifest.json").string() + " --out " + path("tta_bad").string())
                  .code,
              0);
}

TEST_F(CliTest, VisualizationCommands) {
    const auto run = path("vis_run");
    ASSERT_EQ(cli("train --config " + path("exp.json").string() + " --out " + run.string()).code, 0);
    const auto manifest = (path("toy") / "manifest.json").string();
    auto r = cli("visualize-overlay --model " + (run / "best.ckpt").string() + " --manifest " + manifest +
                  " --split test --limit 2 --out " + path("overlay").string());
    ASSERT_EQ(r.code, 0) << r.output;
    std::size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(path("overlay"))) pngs += e.path().extension() == ".png";
    EXPECT_EQ(pngs, 2u);
    r = cli("visualize-activations --model " + (run / "best.ckpt").string() + " --manifest " + manifest +
             " --split test --out " + path("act").string());
    ASSERT_EQ(r.code, 0) << r.output;
    for (int s = 1; s <= 5; ++s) EXPECT_TRUE(fs::exists(path("act") / ("stage" + std::to_string(s) + ".png")));
}
