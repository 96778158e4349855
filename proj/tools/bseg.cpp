// SPDX-License-Identifier: Apache-2.0
// bseg: command-line front end.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bseg/augment.hpp"
#include "bseg/config.hpp"
#include "bseg/data/image.hpp"
#include "bseg/data/manifest.hpp"
#include "bseg/data/toy.hpp"
#include "bseg/metrics.hpp"
#include "bseg/models/checkpoint.hpp"
#include "bseg/models/spec.hpp"
#include "bseg/render.hpp"
#include "bseg/trainer.hpp"
#include "bseg/tta.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bseg;

namespace {

// Removes whatever a failed command created under its output directory.
class OutputGuard {
public:
    explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
        existed_ = fs::exists(dir_);
        if (existed_) {
            for (const auto& e : fs::recursive_directory_iterator(dir_)) before_.insert(e.path());
        }
    }
    void commit() { committed_ = true; }
    ~OutputGuard() {
        if (committed_) return;
        std::error_code ec;
        if (!existed_) {
            fs::remove_all(dir_, ec);
            return;
        }
        std::vector<fs::path> fresh;
        for (const auto& e : fs::recursive_directory_iterator(dir_, ec)) {
            if (!before_.count(e.path())) fresh.push_back(e.path());
        }
        // Deepest first so directories are empty when reached.
        std::sort(fresh.rbegin(), fresh.rend());
        for (const auto& p : fresh) fs::remove_all(p, ec);
    }

private:
    fs::path dir_;
    bool existed_ = false;
    bool committed_ = false;
    std::set<fs::path> before_;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

// Every report leaving the tool passes the consistency checker.
json checked(const metrics::MetricReport& r) {
    const auto problems = metrics::check_report(r);
    if (!problems.empty()) throw std::runtime_error("inconsistent metric report: " + problems.front());
    return r.to_json();
}

std::string tile_name(const data::TileRecord& t) {
    return t.scene_id + "_r" + std::to_string(t.row) + "_c" + std::to_string(t.col);
}

data::NormalizationSpec checkpoint_normalization(const json& meta, const data::NormalizationSpec& fallback) {
    if (!meta.contains("normalization")) return fallback;
    data::NormalizationSpec n;
    n.mean = meta.at("normalization").at("mean").get<std::array<double, 3>>();
    n.std = meta.at("normalization").at("std").get<std::array<double, 3>>();
    return n;
}

tta::TtaPlan resolve_plan(const std::string& preset, const std::string& plan_path) {
    if (!preset.empty() && !plan_path.empty()) throw UsageError("use either --preset or --plan, not both");
    if (!plan_path.empty()) {
        json j = read_json(plan_path);
        if (j.contains("tta")) j = j.at("tta");
        try {
            return tta::plan_from_json(j);
        } catch (const std::exception& e) {
            throw config::ConfigError("tta", 0, e.what());
        }
    }
    if (preset.empty()) throw UsageError("tta needs --preset or --plan");
    return tta::preset(preset);
}

// ---- commands -------------------------------------------------------------

struct TileArgs {
    std::string scenes, out, split = "train", building_ids = "1";
    int tile_size = 512, stride = 0;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
};

int run_tile(const TileArgs& a) {
    data::TileDirectoryOptions o;
    o.tile_size = a.tile_size;
    o.stride = a.stride > 0 ? a.stride : a.tile_size;
    o.split = data::split_from_string(a.split);
    o.val_fraction = a.val_fraction;
    o.seed = a.seed;
    o.building_ids.clear();
    std::stringstream ss(a.building_ids);
    for (std::string tok; std::getline(ss, tok, ',');) o.building_ids.insert(std::stoi(tok));
    if (o.tile_size < 1) throw UsageError("--tile-size must be >= 1");
    if (!fs::is_directory(a.scenes)) throw UsageError("scene directory " + a.scenes + " does not exist");
    OutputGuard guard(a.out);
    const auto m = data::tile_directory(a.scenes, a.out, o);
    guard.commit();
    std::cout << "wrote " << m.tiles.size() << " tiles to " << (fs::path(a.out) / "manifest.json").string() << "\n";
    return 0;
}

int run_stats(const std::string& manifest_path, const std::string& out) {
    const auto m = data::load_manifest(manifest_path);
    const auto s = data::compute_dataset_stats(m);
    const json j{{"mean", s.mean}, {"std", s.std}, {"pixels", s.pixels}, {"degenerate", s.degenerate},
                 {"normalization", {{"mean", m.normalization.mean}, {"std", m.normalization.std}}}};
    if (!out.empty()) {
        write_json(out, j);
    } else {
        std::cout << j.dump(2) << "\n";
    }
    return 0;
}

void write_aug_preview(const config::ExperimentConfig& cfg, const data::DatasetManifest& m,
                       const fs::path& path, int count) {
    const auto tiles = trainer::load_split(m, data::Split::train);
    const int epochs = cfg.trainer.max_epochs;
    const std::vector<int> shown{0, epochs / 2, epochs - 1};
    std::vector<data::ImageU8> rows;
    for (int i = 0; i < std::min<int>(count, static_cast<int>(tiles.size())); ++i) {
        std::vector<data::ImageU8> cells{render::overlay(data::to_image(tiles[i].image), tiles[i].mask)};
        for (int e : shown) {
            augment::Sample s{tiles[i].image, tiles[i].mask};
            augment::augment(s, cfg.augmentation, e, cfg.trainer.seed, static_cast<std::uint64_t>(e),
                             static_cast<std::uint64_t>(i));
            cells.push_back(render::overlay(data::to_image(s.image), s.mask));
        }
        rows.push_back(render::hstack(cells));
    }
    if (!rows.empty()) data::write_png(path, render::vstack(rows));
}

int run_train(const std::string& config_path, const std::string& out, bool resume, int aug_preview) {
    const auto cfg = config::load_experiment(config_path);
    const auto manifest = data::load_manifest(cfg.data.manifest);
    OutputGuard guard(out);
    fs::create_directories(out);
    json canon = config::to_json(cfg);
    canon["config_hash"] = config::config_hash(cfg);
    write_json(fs::path(out) / "config.json", canon);
    if (aug_preview > 0) write_aug_preview(cfg, manifest, fs::path(out) / "aug_preview.png", aug_preview);

    trainer::TrainOptions opts;
    opts.resume = resume;
    opts.log = &std::cout;
    const auto result = trainer::train(cfg, manifest, out, opts);
    if (result.best_epoch == 0) throw std::runtime_error("training produced no checkpoint");

    auto loaded = models::load_checkpoint(result.best_checkpoint);
    metrics::MetricOptions mo;
    mo.threshold = cfg.trainer.threshold;
    const auto split = data::split_from_string(cfg.data.eval_split);
    const std::string stamp = result.config_hash + ";select=" + cfg.trainer.selection_metric;
    if (!manifest.indices(split).empty()) {
        write_json(fs::path(out) / "report.json",
                   checked(trainer::evaluate(*loaded.model, manifest, split, mo, nullptr, stamp)));
        if (cfg.tta) {
            write_json(fs::path(out) / "report_tta.json",
                       checked(trainer::evaluate(*loaded.model, manifest, split, mo, &*cfg.tta, stamp)));
        }
    }
    guard.commit();
    std::cout << "best epoch " << result.best_epoch << " (" << cfg.trainer.selection_metric << " "
              << result.best_metric << "), checkpoint " << result.best_checkpoint.string() << "\n";
    return 0;
}

struct PredictArgs {
    std::string model, manifest, split = "test", out, image, preset, plan;
    double threshold = -1.0;
    bool write_gt = false;
    bool probabilities = false;
};

int run_predict(const PredictArgs& a) {
    if (a.manifest.empty() == a.image.empty()) throw UsageError("predict needs exactly one of --manifest or --image");
    std::optional<tta::TtaPlan> plan;
    if (!a.preset.empty() || !a.plan.empty()) plan = resolve_plan(a.preset, a.plan);
    auto ck = models::load_checkpoint(a.model);
    const double threshold = a.threshold >= 0.0 ? a.threshold : ck.metadata.value("threshold", 0.5);
    OutputGuard guard(a.out);
    const fs::path out(a.out);
    fs::create_directories(out / "masks");
    json index = json::array();
    auto emit = [&](const std::string& name, const nn::Tensor& unit, const data::NormalizationSpec& norm) {
        const nn::Tensor p = trainer::predict_tile(*ck.model, unit, norm, plan ? &*plan : nullptr);
        const auto mask = metrics::binarize(p.values(), threshold);
        data::write_mask_png(out / "masks" / (name + ".png"), mask, p.shape().h, p.shape().w);
        if (a.probabilities) {
            fs::create_directories(out / "probabilities");
            nn::Tensor rgb(nn::Shape{1, 3, p.shape().h, p.shape().w});
            for (int c = 0; c < 3; ++c) std::copy_n(p.data(), p.numel(), rgb.plane(0, c));
            data::write_png(out / "probabilities" / (name + ".png"), data::to_image(rgb));
        }
        index.push_back(json{{"name", name}, {"mask", "masks/" + name + ".png"}});
    };
    if (!a.image.empty()) {
        const auto norm = checkpoint_normalization(ck.metadata, data::NormalizationSpec{});
        emit(fs::path(a.image).stem().string(), data::to_unit(data::read_rgb(a.image)), norm);
    } else {
        const auto m = data::load_manifest(a.manifest);
        const auto split = data::split_from_string(a.split);
        const auto idx = m.indices(split);
        if (idx.empty()) throw std::runtime_error(a.split + " split has no tiles");
        for (std::size_t i : idx) {
            const auto& rec = m.tiles[i];
            const auto t = data::load_tile(m, rec);
            emit(tile_name(rec), data::to_unit(t.image), m.normalization);
            if (a.write_gt) {
                fs::create_directories(out / "gt");
                data::write_mask_png(out / "gt" / (tile_name(rec) + ".png"), t.mask, t.image.height, t.image.width);
            }
        }
    }
    write_json(out / "predictions.json",
               json{{"threshold", threshold}, {"tta", plan ? tta::to_json(*plan) : json(nullptr)}, {"tiles", index}});
    guard.commit();
    std::cout << "wrote " << index.size() << " masks to " << (out / "masks").string() << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string pred_dir, gt_dir, manifest, split = "test", model, out, csv;
    double threshold = 0.5;
    bool macro = false, exclude_vacuous = false;
};

int run_evaluate(const EvaluateArgs& a) {
    metrics::MetricOptions mo;
    mo.threshold = a.threshold;
    mo.aggregation = a.macro ? metrics::Aggregation::macro : metrics::Aggregation::micro;
    mo.exclude_vacuous = a.exclude_vacuous;
    metrics::MetricAccumulator acc(mo);
    std::vector<std::string> names;

    if (!a.pred_dir.empty()) {
        if (a.gt_dir.empty() == a.manifest.empty()) {
            throw UsageError("--pred-dir needs exactly one of --gt-dir or --manifest");
        }
        if (!fs::is_directory(a.pred_dir)) throw UsageError("prediction directory " + a.pred_dir + " does not exist");
        std::vector<std::pair<std::string, std::vector<std::uint8_t>>> gts;
        if (!a.gt_dir.empty()) {
            if (!fs::is_directory(a.gt_dir)) throw UsageError("ground-truth directory " + a.gt_dir + " does not exist");
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(a.gt_dir)) {
                if (e.path().extension() == ".png") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) gts.emplace_back(f.stem().string(), data::read_mask(f));
        } else {
            const auto m = data::load_manifest(a.manifest);
            for (std::size_t i : m.indices(data::split_from_string(a.split))) {
                gts.emplace_back(tile_name(m.tiles[i]), data::load_tile(m, m.tiles[i]).mask);
            }
            std::sort(gts.begin(), gts.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        }
        if (gts.empty()) throw std::runtime_error("no ground-truth masks found");
        for (const auto& [name, gt] : gts) {
            const fs::path p = fs::path(a.pred_dir) / (name + ".png");
            if (!fs::exists(p)) throw std::runtime_error("missing prediction " + p.string());
            const auto pred = data::read_mask(p);
            if (pred.size() != gt.size()) throw std::runtime_error("size mismatch for " + name);
            acc.add(pred, gt);
            names.push_back(name);
        }
    } else {
        if (a.model.empty() || a.manifest.empty()) {
            throw UsageError("evaluate needs --pred-dir, or --model with --manifest");
        }
        auto ck = models::load_checkpoint(a.model);
        const auto m = data::load_manifest(a.manifest);
        for (std::size_t i : m.indices(data::split_from_string(a.split))) {
            const auto t = data::load_tile(m, m.tiles[i]);
            const auto p = trainer::predict_tile(*ck.model, data::to_unit(t.image), m.normalization);
            acc.add_probabilities(p.values(), t.mask);
            names.push_back(tile_name(m.tiles[i]));
        }
        if (names.empty()) throw std::runtime_error(a.split + " split has no tiles");
    }

    const json report = checked(acc.report());
    try {
        if (!a.out.empty()) write_json(a.out, report);
        if (!a.csv.empty()) {
            std::ofstream csv(a.csv, std::ios::trunc);
            if (!csv) throw std::runtime_error("cannot write " + a.csv);
            csv << "name,tp,fp,fn,tn,iou_building,iou_background\n";
            const auto& per = acc.per_image();
            for (std::size_t i = 0; i < per.size(); ++i) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.17g,%.17g", metrics::iou(per[i].building),
                              metrics::iou(per[i].background));
                csv << names[i] << "," << per[i].building.tp << "," << per[i].building.fp << ","
                    << per[i].building.fn << "," << per[i].building.tn << "," << buf << "\n";
            }
        }
    } catch (...) {
        std::error_code ec;
        if (!a.out.empty()) fs::remove(a.out, ec);
        if (!a.csv.empty()) fs::remove(a.csv, ec);
        throw;
    }
    if (a.out.empty()) std::cout << report.dump(2) << "\n";
    std::printf("iou_building %.6f miou %.6f over %zu images\n", report.at("iou").at("building").get<double>(),
                report.at("miou").get<double>(), names.size());
    return 0;
}

struct TtaEvalArgs {
    std::string model, preset, plan, manifest, split = "test", out;
    int panel = 0;
    double threshold = -1.0;
};

int run_tta_evaluate(const TtaEvalArgs& a) {
    const tta::TtaPlan plan = resolve_plan(a.preset, a.plan);
    auto ck = models::load_checkpoint(a.model);
    const auto m = data::load_manifest(a.manifest);
    const auto tiles = trainer::load_split(m, data::split_from_string(a.split));
    if (tiles.empty()) throw std::runtime_error(a.split + " split has no tiles");
    metrics::MetricOptions mo;
    mo.threshold = a.threshold >= 0.0 ? a.threshold : plan.threshold;
    OutputGuard guard(a.out);
    fs::create_directories(a.out);
    const auto base = trainer::evaluate(*ck.model, tiles, m.normalization, mo);
    const auto with = trainer::evaluate(*ck.model, tiles, m.normalization, mo, &plan);
    const fs::path out(a.out);
    write_json(out / "no_tta.json", checked(base));
    write_json(out / "tta.json", checked(with));
    const json cmp{{"plan", tta::to_json(plan)},
                   {"variants", plan.size()},
                   {"no_tta", {{"iou_building", base.iou_building}, {"miou", base.miou}}},
                   {"tta", {{"iou_building", with.iou_building}, {"miou", with.miou}}},
                   {"delta_iou_building", with.iou_building - base.iou_building},
                   {"delta_miou", with.miou - base.miou}};
    write_json(out / "comparison.json", cmp);
    if (a.panel > 0) {
        std::vector<data::ImageU8> rows;
        for (int i = 0; i < std::min<int>(a.panel, static_cast<int>(tiles.size())); ++i) {
            const auto& t = tiles[i];
            const auto rgb = data::to_image(t.image);
            const auto p0 = trainer::predict_tile(*ck.model, t.image, m.normalization);
            const auto p1 = trainer::predict_tile(*ck.model, t.image, m.normalization, &plan);
            rows.push_back(render::hstack({rgb, render::overlay(rgb, metrics::binarize(p0.values(), mo.threshold)),
                                           render::overlay(rgb, metrics::binarize(p1.values(), mo.threshold)),
                                           render::overlay(rgb, t.mask, 0.4, {0, 255, 0})}));
        }
        data::write_png(out / "panel.png", render::vstack(rows));
    }
    guard.commit();
    std::printf("no-tta miou %.6f  tta miou %.6f  delta %+.6f (%zu variants)\n", base.miou, with.miou,
                with.miou - base.miou, plan.size());
    return 0;
}

int run_rf(const std::string& encoder, double width, bool table) {
    const auto spec = models::encoder_by_name(encoder, width);
    const int rf = models::receptive_field(models::encoder_layers(spec));
    if (table) {
        std::printf("%-6s %-7s %-9s %-7s %s\n", "stage", "stride", "channels", "layers", "receptive_field");
        for (const auto& r : models::receptive_field_table(spec)) {
            std::printf("%-6d %-7d %-9d %-7d %d\n", r.stage, r.stride, r.channels, r.layers, r.receptive_field);
        }
    }
    std::printf("%s receptive field: %d\n", encoder.c_str(), rf);
    return 0;
}

struct OverlayArgs {
    std::string model, manifest, split = "test", image, mask, out;
    double alpha = 0.4, threshold = 0.5;
    int limit = 8;
};

int run_overlay(const OverlayArgs& a) {
    if (!(a.alpha >= 0.0 && a.alpha <= 1.0)) throw UsageError("--alpha must lie in [0, 1]");
    if (!a.image.empty()) {
        if (a.mask.empty()) throw UsageError("--image needs --mask");
        const auto rgb = data::read_rgb(a.image);
        int h = 0, w = 0;
        const auto mask = data::read_mask(a.mask, &h, &w);
        if (h != rgb.height || w != rgb.width) throw std::runtime_error("mask and image sizes differ");
        OutputGuard guard(a.out);
        fs::create_directories(a.out);
        data::write_png(fs::path(a.out) / (fs::path(a.image).stem().string() + "_overlay.png"),
                        render::overlay(rgb, mask, a.alpha));
        guard.commit();
        return 0;
    }
    if (a.model.empty() || a.manifest.empty()) throw UsageError("overlay needs --image/--mask or --model/--manifest");
    auto ck = models::load_checkpoint(a.model);
    const auto m = data::load_manifest(a.manifest);
    const auto idx = m.indices(data::split_from_string(a.split));
    if (idx.empty()) throw std::runtime_error(a.split + " split has no tiles");
    OutputGuard guard(a.out);
    fs::create_directories(a.out);
    int n = 0;
    for (std::size_t i : idx) {
        if (n++ >= a.limit) break;
        const auto t = data::load_tile(m, m.tiles[i]);
        const auto p = trainer::predict_tile(*ck.model, data::to_unit(t.image), m.normalization);
        data::write_png(fs::path(a.out) / (tile_name(m.tiles[i]) + "_overlay.png"),
                        render::overlay(t.image, metrics::binarize(p.values(), a.threshold), a.alpha));
    }
    guard.commit();
    return 0;
}

struct ActivationArgs {
    std::string model, manifest, split = "test", image, out;
    int index = 0;
};

int run_activations(const ActivationArgs& a) {
    auto ck = models::load_checkpoint(a.model);
    data::ImageU8 rgb;
    data::NormalizationSpec norm = checkpoint_normalization(ck.metadata, {});
    std::string name;
    if (!a.image.empty()) {
        rgb = data::read_rgb(a.image);
        name = fs::path(a.image).stem().string();
    } else {
        if (a.manifest.empty()) throw UsageError("visualize-activations needs --image or --manifest");
        const auto m = data::load_manifest(a.manifest);
        const auto idx = m.indices(data::split_from_string(a.split));
        if (a.index < 0 || static_cast<std::size_t>(a.index) >= idx.size()) {
            throw UsageError("--index out of range for the " + a.split + " split");
        }
        rgb = data::load_tile(m, m.tiles[idx[static_cast<std::size_t>(a.index)]]).image;
        norm = m.normalization;
        name = tile_name(m.tiles[idx[static_cast<std::size_t>(a.index)]]);
    }
    const auto stages = ck.model->stage_activations(data::normalize(rgb, norm));
    OutputGuard guard(a.out);
    fs::create_directories(a.out);
    const auto tiles = render::activation_tiles(stages, rgb.height, rgb.width);
    for (std::size_t s = 0; s < tiles.size(); ++s) {
        data::write_png(fs::path(a.out) / ("stage" + std::to_string(s + 1) + ".png"), tiles[s]);
    }
    std::vector<data::ImageU8> row{rgb};
    row.insert(row.end(), tiles.begin(), tiles.end());
    data::write_png(fs::path(a.out) / (name + "_activations.png"), render::hstack(row));
    guard.commit();
    return 0;
}

int run_toy(const data::ToyOptions& o, const std::string& out) {
    data::validate(o);
    OutputGuard guard(out);
    const auto ds = data::make_toy_dataset(out, o);
    guard.commit();
    std::cout << "wrote " << ds.manifest.tiles.size() << " tiles (" << ds.manifest.indices(data::Split::train).size()
              << " train, " << ds.manifest.indices(data::Split::val).size() << " val, "
              << ds.manifest.indices(data::Split::test).size() << " test) to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Building-footprint segmentation toolkit"};
    app.require_subcommand(1);

    TileArgs tile;
    auto* c_tile = app.add_subcommand("tile", "Cut scenes (<id>.png + <id>_labels.png) into tiles and write a manifest");
    c_tile->add_option("--scene-dir,--scenes", tile.scenes, "Scene directory")->required();
    c_tile->add_option("--out", tile.out, "Output directory")->required();
    c_tile->add_option("--tile-size", tile.tile_size, "Tile side in pixels")->capture_default_str();
    c_tile->add_option("--stride", tile.stride, "Window stride (default: tile size)");
    c_tile->add_option("--split", tile.split, "Split for the tiles: train or test")->capture_default_str();
    c_tile->add_option("--building-ids", tile.building_ids, "Comma-separated label ids counted as building")
        ->capture_default_str();
    c_tile->add_option("--val-fraction", tile.val_fraction, "Share of train tiles moved to val")->capture_default_str();
    c_tile->add_option("--seed", tile.seed, "Seed for the validation carve-out")->capture_default_str();

    std::string stats_manifest, stats_out;
    auto* c_stats = app.add_subcommand("stats", "Per-channel statistics of the normalized train tiles");
    c_stats->add_option("--manifest", stats_manifest, "Dataset manifest")->required();
    c_stats->add_option("--out", stats_out, "JSON output (default: stdout)");

    std::string train_config, train_out;
    bool train_resume = false;
    int aug_preview = 0;
    auto* c_train = app.add_subcommand("train", "Train a model from an experiment config");
    c_train->add_option("--config", train_config, "Experiment config JSON")->required();
    c_train->add_option("--out", train_out, "Run directory")->required();
    c_train->add_flag("--resume", train_resume, "Continue from <out>/resume.state");
    c_train->add_option("--aug-preview", aug_preview, "Write aug_preview.png for this many train tiles");

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Write binary masks for a split or a single image");
    c_pred->add_option("--model", pred.model, "Checkpoint")->required();
    c_pred->add_option("--manifest", pred.manifest, "Dataset manifest");
    c_pred->add_option("--split", pred.split, "Split to predict")->capture_default_str();
    c_pred->add_option("--image", pred.image, "Single RGB image instead of a manifest");
    c_pred->add_option("--out", pred.out, "Output directory")->required();
    c_pred->add_option("--preset", pred.preset, "TTA preset: method1, method2 or method3");
    c_pred->add_option("--plan", pred.plan, "TTA plan JSON");
    c_pred->add_option("--threshold", pred.threshold, "Probability threshold (default: from checkpoint)");
    c_pred->add_flag("--write-gt", pred.write_gt, "Also write ground-truth masks to <out>/gt");
    c_pred->add_flag("--probabilities", pred.probabilities, "Also write probability maps");

    EvaluateArgs ev;
    auto* c_eval = app.add_subcommand("evaluate", "IoU / mIoU report from predicted masks or a checkpoint");
    c_eval->add_option("--pred-dir", ev.pred_dir, "Directory of predicted mask PNGs");
    c_eval->add_option("--gt-dir", ev.gt_dir, "Directory of ground-truth mask PNGs (same file names)");
    c_eval->add_option("--manifest", ev.manifest, "Manifest supplying ground truth (and tiles with --model)");
    c_eval->add_option("--split", ev.split, "Split")->capture_default_str();
    c_eval->add_option("--model", ev.model, "Checkpoint to run instead of reading --pred-dir");
    c_eval->add_option("--out", ev.out, "Report JSON (default: stdout)");
    c_eval->add_option("--csv", ev.csv, "Per-image CSV");
    c_eval->add_option("--threshold", ev.threshold, "Probability threshold with --model")->capture_default_str();
    c_eval->add_flag("--macro", ev.macro, "Average per-image IoUs instead of pooling counts");
    c_eval->add_flag("--exclude-vacuous", ev.exclude_vacuous, "Drop classes with an empty union from the mean");

    TtaEvalArgs te;
    auto* c_tta = app.add_subcommand("tta-evaluate", "Side-by-side reports without and with TTA");
    c_tta->add_option("--model", te.model, "Checkpoint")->required();
    c_tta->add_option("--preset", te.preset, "method1, method2 or method3");
    c_tta->add_option("--plan", te.plan, "TTA plan JSON (columns flip/rotation/scale/multiply)");
    c_tta->add_option("--manifest", te.manifest, "Dataset manifest")->required();
    c_tta->add_option("--split", te.split, "Split")->capture_default_str();
    c_tta->add_option("--out", te.out, "Output directory")->required();
    c_tta->add_option("--panel", te.panel, "Write panel.png for this many tiles");
    c_tta->add_option("--threshold", te.threshold, "Threshold (default: from the plan)");

    std::string rf_encoder;
    double rf_width = 1.0;
    bool rf_table = false;
    auto* c_rf = app.add_subcommand("rf", "Receptive field of an encoder stack");
    c_rf->add_option("--encoder", rf_encoder, "Encoder name, e.g. vgg16, resnet50")->required();
    c_rf->add_option("--width", rf_width, "Width multiplier")->capture_default_str();
    c_rf->add_flag("--table", rf_table, "Print the per-stage table");

    OverlayArgs ov;
    auto* c_ov = app.add_subcommand("visualize-overlay", "Tint predicted building pixels over the RGB tile");
    c_ov->add_option("--model", ov.model, "Checkpoint");
    c_ov->add_option("--manifest", ov.manifest, "Dataset manifest");
    c_ov->add_option("--split", ov.split, "Split")->capture_default_str();
    c_ov->add_option("--image", ov.image, "RGB image (with --mask)");
    c_ov->add_option("--mask", ov.mask, "Mask PNG (nonzero = building)");
    c_ov->add_option("--out", ov.out, "Output directory")->required();
    c_ov->add_option("--alpha", ov.alpha, "Tint opacity")->capture_default_str();
    c_ov->add_option("--threshold", ov.threshold, "Probability threshold")->capture_default_str();
    c_ov->add_option("--limit", ov.limit, "Maximum tiles")->capture_default_str();

    ActivationArgs act;
    auto* c_act = app.add_subcommand("visualize-activations", "Per-stage channel-mean activation maps");
    c_act->add_option("--model", act.model, "Checkpoint")->required();
    c_act->add_option("--image", act.image, "RGB image");
    c_act->add_option("--manifest", act.manifest, "Dataset manifest");
    c_act->add_option("--split", act.split, "Split")->capture_default_str();
    c_act->add_option("--index", act.index, "Tile index within the split")->capture_default_str();
    c_act->add_option("--out", act.out, "Output directory")->required();

    data::ToyOptions toy;
    std::string toy_out;
    auto* c_toy = app.add_subcommand("make-toy-dataset", "Synthetic rectangles dataset with a half-resolution test set");
    c_toy->add_option("--tiles", toy.train_tiles, "Train tiles (val is carved out of these)")->capture_default_str();
    c_toy->add_option("--test-tiles", toy.test_tiles, "Test tiles")->capture_default_str();
    c_toy->add_option("--size", toy.size, "Tile side")->capture_default_str();
    c_toy->add_option("--seed", toy.seed, "Seed")->capture_default_str();
    c_toy->add_option("--val-fraction", toy.val_fraction, "Validation share")->capture_default_str();
    c_toy->add_option("--out", toy_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*c_tile) return run_tile(tile);
        if (*c_stats) return run_stats(stats_manifest, stats_out);
        if (*c_train) return run_train(train_config, train_out, train_resume, aug_preview);
        if (*c_pred) return run_predict(pred);
        if (*c_eval) return run_evaluate(ev);
        if (*c_tta) return run_tta_evaluate(te);
        if (*c_rf) return run_rf(rf_encoder, rf_width, rf_table);
        if (*c_ov) return run_overlay(ov);
        if (*c_act) return run_activations(act);
        if (*c_toy) return run_toy(toy, toy_out);
    } catch (const config::ConfigError& e) {
        std::cerr << "bseg: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "bseg: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "bseg: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
