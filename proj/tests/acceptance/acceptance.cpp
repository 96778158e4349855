// SPDX-License-Identifier: Apache-2.0
// Desk-scale acceptance suite: one PASS/FAIL line per criterion.
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bseg/data/manifest.hpp"
#include "bseg/losses.hpp"
#include "bseg/metrics.hpp"
#include "bseg/models/checkpoint.hpp"
#include "bseg/models/network.hpp"
#include "bseg/trainer.hpp"
#include "bseg/tta.hpp"

using namespace bseg;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(BSEG_CLI_PATH) + " " + args + " >> " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

std::vector<double> binary(std::mt19937_64& rng, std::size_t n) {
    std::bernoulli_distribution b(0.4);
    std::vector<double> v(n);
    for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
    return v;
}

Outcome loss_identities() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    bool exact = true;
    for (int i = 0; i < 100; ++i) {
        const auto p = uniform(rng, 256, 0.0, 1.0);
        const auto g = binary(rng, 256);
        worst = std::max(worst, std::abs(losses::tversky_loss(p, g, 0.5, 0.5, 0.0) - losses::dice_loss(p, g, 0.0)));
        exact = exact && losses::focal_tversky_loss(p, g, 0.3, 0.7, 1.0, 1.0) == losses::tversky_loss(p, g, 0.3, 0.7, 1.0);
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-12 && exact && secs < 1.0,
            "max |tversky-dice| " + fmt("%.3g", worst) + ", focal(1) exact " + (exact ? "yes" : "no") + ", " +
                fmt("%.3f s", secs)};
}

Outcome gradient_checks() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(102);
    double worst = 0.0;
    for (auto k : {losses::LossKind::dice, losses::LossKind::weighted_dice, losses::LossKind::tversky,
                   losses::LossKind::focal_tversky}) {
        losses::LossConfig c;
        c.kind = k;
        if (k == losses::LossKind::focal_tversky) c.gamma = 2.0;
        for (int trial = 0; trial < 10; ++trial) {
            const auto p = uniform(rng, 64, 0.05, 0.95);
            const auto g = binary(rng, 64);
            worst = std::max(worst, losses::check_gradients(c, p, g, 1e-5));
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 30.0, "max relative error " + fmt("%.3g", worst) + ", " + fmt("%.3f s", secs)};
}

Outcome iou_oracle() {
    std::mt19937_64 rng(103);
    std::bernoulli_distribution b(0.35);
    bool ok = true;
    std::vector<std::vector<std::uint8_t>> preds, gts;
    metrics::MetricAccumulator whole;
    for (int t = 0; t < 50; ++t) {
        std::vector<std::uint8_t> p(32 * 32), g(32 * 32);
        for (auto& v : p) v = b(rng);
        for (auto& v : g) v = b(rng);
        std::uint64_t ib = 0, ub = 0, ig = 0, ug = 0;
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                const bool pp = p[y * 32 + x], gg = g[y * 32 + x];
                ib += pp && gg;
                ub += pp || gg;
                ig += !pp && !gg;
                ug += !pp || !gg;
            }
        }
        const double ob = static_cast<double>(ib) / static_cast<double>(ub);
        const double og = static_cast<double>(ig) / static_cast<double>(ug);
        const auto c = metrics::count(p, g);
        ok = ok && metrics::iou(c.building) == ob && metrics::iou(c.background) == og &&
             metrics::miou(c) == (ob + og) / 2.0;
        whole.add(p, g);
        preds.push_back(std::move(p));
        gts.push_back(std::move(g));
    }
    std::uniform_int_distribution<int> pick(0, 4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<metrics::MetricAccumulator> parts(5);
        for (std::size_t i = 0; i < preds.size(); ++i) parts[pick(rng)].add(preds[i], gts[i]);
        metrics::MetricAccumulator merged;
        for (const auto& part : parts) merged.merge(part);
        ok = ok && merged.totals() == whole.totals();
    }
    return {ok, "50 mask pairs, 20 random partitions"};
}

Outcome receptive_fields(const fs::path& work) {
    const auto log = work / "rf.log";
    fs::remove(log);
    cli("rf --encoder vgg16", log);
    cli("rf --encoder resnet50", log);
    const auto text = read_text(log);
    const bool vgg = text.find("vgg16 receptive field: 212") != std::string::npos;
    const bool res = text.find("resnet50 receptive field: 483") != std::string::npos;
    return {vgg && res, std::string("vgg16 212 ") + (vgg ? "ok" : "missing") + ", resnet50 483 " + (res ? "ok" : "missing")};
}

Outcome tta_round_trips() {
    std::mt19937_64 rng(105);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    nn::Tensor map(nn::Shape{1, 1, 32, 32});
    for (auto& v : map.values()) v = u(rng);
    bool exact = true;
    for (bool f : {false, true}) {
        for (int r : {0, 90, 180, 270}) {
            tta::Variant v;
            v.hflip = f;
            v.rotation = r;
            const auto back = tta::invert_prediction(tta::apply_forward(map, v, 32), v, 32, 32);
            exact = exact && std::equal(back.values().begin(), back.values().end(), map.values().begin());
        }
    }

    nn::Tensor smooth(nn::Shape{1, 1, 64, 64});
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            smooth.at(0, 0, y, x) = static_cast<float>(0.5 + 0.3 * std::sin(2 * M_PI * x / 64) * std::cos(2 * M_PI * y / 64));
        }
    }
    tta::Variant half;
    half.scale = 0.5;
    const auto back = tta::invert_prediction(tta::apply_forward(smooth, half, 16), half, 64, 64);
    double mae = 0.0;
    for (std::size_t i = 0; i < smooth.numel(); ++i) mae += std::abs(back.data()[i] - smooth.data()[i]);
    mae /= static_cast<double>(smooth.numel());

    const auto enc = models::encoder_by_name("vgg16", 0.125);
    const auto model = models::build_model(enc, models::default_decoder(models::DecoderKind::unetpp, enc), 5);
    nn::Tensor img(nn::Shape{1, 3, 64, 64});
    for (auto& v : img.values()) v = u(rng);
    const data::NormalizationSpec norm;
    const auto plain = model->predict(data::normalize(img, norm));
    const auto ident = tta::tta_predict(*model, img, tta::identity_plan(), norm);
    const bool same = std::equal(plain.values().begin(), plain.values().end(), ident.values().begin());

    const std::array<std::size_t, 3> sizes{tta::preset("method1").size(), tta::preset("method2").size(),
                                           tta::preset("method3").size()};
    const bool sizes_ok = sizes == std::array<std::size_t, 3>{12, 48, 12};
    return {exact && mae < 0.02 && same && sizes_ok,
            std::string("permutations ") + (exact ? "exact" : "inexact") + ", rescale MAE " + fmt("%.4f", mae) +
                ", identity plan " + (same ? "bit-exact" : "differs") + ", presets " + std::to_string(sizes[0]) + "/" +
                std::to_string(sizes[1]) + "/" + std::to_string(sizes[2])};
}

const char* kToyConfig = R"({
  "data": {"manifest": "toy/manifest.json"},
  "model": {"encoder": "vgg16", "width_multiplier": 0.125, "decoder": "unetpp"},
  "loss": {"kind": "weighted_dice"},
  "trainer": {"max_epochs": 20, "batch_size": 8, "learning_rate": 0.0001, "seed": 0}
})";

Outcome desk_training(const fs::path& work) {
    const auto log = work / "train.log";
    fs::remove(log);
    fs::remove_all(work / "toy");
    fs::remove_all(work / "run");
    if (cli("make-toy-dataset --tiles 200 --test-tiles 50 --size 64 --seed 7 --out " + (work / "toy").string(), log) != 0) {
        return {false, "make-toy-dataset failed, see " + log.string()};
    }
    std::ofstream(work / "toy.json") << kToyConfig;
    const auto t0 = Clock::now();
    const int code = cli("train --config " + (work / "toy.json").string() + " --out " + (work / "run").string(), log);
    const double secs = seconds_since(t0);
    if (code != 0) return {false, "train exited " + std::to_string(code) + ", see " + log.string()};
    const auto report = read_json(work / "run" / "report.json");
    const double iou = report.at("iou").at("building").get<double>();
    return {iou >= 0.85 && secs < 15 * 60,
            "test building IoU " + fmt("%.4f", iou) + ", mIoU " + fmt("%.4f", report.at("miou").get<double>()) +
                ", training " + fmt("%.0f s", secs)};
}

Outcome tta_benefit(const fs::path& work) {
    const auto log = work / "tta.log";
    fs::remove(log);
    const auto ckpt = work / "run" / "best.ckpt";
    if (!fs::exists(ckpt)) return {false, "no checkpoint from the desk-scale run"};
    const auto manifest = work / "toy" / "manifest_halfres.json";
    std::ofstream(work / "multiscale.json") << tta::to_json(tta::multiscale_plan({0.5, 0.75, 1.0})).dump(2);
    fs::remove_all(work / "tta_method3");
    fs::remove_all(work / "tta_multiscale");
    const int a = cli("tta-evaluate --model " + ckpt.string() + " --preset method3 --manifest " + manifest.string() +
                          " --out " + (work / "tta_method3").string(),
                      log);
    const int b = cli("tta-evaluate --model " + ckpt.string() + " --plan " + (work / "multiscale.json").string() +
                          " --manifest " + manifest.string() + " --out " + (work / "tta_multiscale").string(),
                      log);
    if (a != 0 || b != 0) return {false, "tta-evaluate failed, see " + log.string()};
    const auto m3 = read_json(work / "tta_method3" / "comparison.json");
    const auto ms = read_json(work / "tta_multiscale" / "comparison.json");
    const double d3 = m3.at("delta_miou").get<double>();
    const double dms = ms.at("delta_miou").get<double>();
    return {d3 >= 0.0 && dms >= 0.0,
            "no-TTA mIoU " + fmt("%.4f", m3.at("no_tta").at("miou").get<double>()) + ", method3 delta " +
                fmt("%+.4f", d3) + ", multiscale delta " + fmt("%+.4f", dms)};
}

Outcome determinism(const fs::path& work) {
    const auto log = work / "determinism.log";
    fs::remove(log);
    const auto manifest = work / "toy" / "manifest.json";
    if (!fs::exists(manifest)) return {false, "toy dataset missing"};
    std::ofstream(work / "short.json") << R"({
  "data": {"manifest": "toy/manifest.json"},
  "model": {"encoder": "vgg16", "width_multiplier": 0.125, "decoder": "unetpp"},
  "loss": {"kind": "weighted_dice"},
  "trainer": {"max_epochs": 2, "seed": 11}
})";
    for (const char* d : {"det_a", "det_b"}) {
        fs::remove_all(work / d);
        if (cli("train --config " + (work / "short.json").string() + " --out " + (work / d).string(), log) != 0) {
            return {false, "train failed, see " + log.string()};
        }
    }
    const bool same_history = read_text(work / "det_a" / "history.csv") == read_text(work / "det_b" / "history.csv");

    const auto m = data::load_manifest(manifest);
    const auto first = models::load_checkpoint(work / "det_a" / "best.ckpt");
    models::save_checkpoint(work / "det_copy.ckpt", *first.model, first.metadata);
    const auto second = models::load_checkpoint(work / "det_copy.ckpt");
    const auto ra = trainer::evaluate(*first.model, m, data::Split::test).to_json().dump();
    const auto rb = trainer::evaluate(*second.model, m, data::Split::test).to_json().dump();
    return {same_history && ra == rb, std::string("history ") + (same_history ? "identical" : "differs") +
                                          ", round-trip report " + (ra == rb ? "identical" : "differs")};
}

Outcome report_consistency(const fs::path& work) {
    std::size_t checked = 0;
    std::vector<std::string> problems;
    for (const auto& e : fs::recursive_directory_iterator(work)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        json j;
        try {
            j = read_json(e.path());
        } catch (const std::exception&) {
            continue;
        }
        if (!j.is_object() || !j.contains("counts") || !j.contains("miou")) continue;
        ++checked;
        for (const auto& p : metrics::check_report(j)) problems.push_back(e.path().filename().string() + ": " + p);
    }
    metrics::ConfusionCounts c;
    c.building = {331699, 40000, 37301, 111699};
    c.background = {111699, 37301, 40000, 331699};
    const auto r = metrics::make_report(c);
    const bool table_ok = std::abs(r.iou_building - 0.811) < 1e-12 && std::abs(r.miou - 0.701) < 1e-12 &&
                          std::abs(r.iou_background - 0.591) < 1e-12 && metrics::check_report(r).empty() &&
                          std::abs(metrics::implied_background_iou(0.811, 0.701) - 0.591) < 1e-12;
    std::string detail = std::to_string(checked) + " emitted reports consistent, 0.811/0.701 => background " +
                         fmt("%.3f", r.iou_background);
    if (!problems.empty()) detail = problems.front();
    return {checked > 0 && problems.empty() && table_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    fs::path work = fs::temp_directory_path() / "bseg_acceptance";
    app.add_option("--work-dir", work, "Scratch directory");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"loss identities", loss_identities},
        {"gradient checks", gradient_checks},
        {"IoU oracle equivalence", iou_oracle},
        {"receptive field", [&] { return receptive_fields(work); }},
        {"TTA round-trips", tta_round_trips},
        {"desk-scale training", [&] { return desk_training(work); }},
        {"TTA benefit", [&] { return tta_benefit(work); }},
        {"determinism", [&] { return determinism(work); }},
        {"report consistency", [&] { return report_consistency(work); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
