// SPDX-License-Identifier: Apache-2.0
#include "bseg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "bseg/augment.hpp"
#include "bseg/losses.hpp"
#include "bseg/models/checkpoint.hpp"
#include "bseg/nn/adam.hpp"

namespace bseg::trainer {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShuffleStream = 0xFFFFFFFFull;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json row_to_json(const EpochRow& r) {
    return json{{"epoch", r.epoch},           {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
                {"val_iou_building", r.val_iou_building}, {"val_miou", r.val_miou},
                {"ramp_scale", r.ramp_scale}, {"learning_rate", r.learning_rate},
                {"best", r.best},             {"wall_seconds", r.wall_seconds}};
}

EpochRow row_from_json(const json& j) {
    EpochRow r;
    r.epoch = j.at("epoch").get<int>();
    r.train_loss = j.at("train_loss").get<double>();
    r.val_loss = j.at("val_loss").get<double>();
    r.val_iou_building = j.at("val_iou_building").get<double>();
    r.val_miou = j.at("val_miou").get<double>();
    r.ramp_scale = j.at("ramp_scale").get<double>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.best = j.at("best").get<bool>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    return r;
}

json normalization_json(const data::NormalizationSpec& n) {
    return json{{"mean", n.mean}, {"std", n.std}};
}

nn::Tensor mask_tensor(const std::vector<std::uint8_t>& mask, int h, int w) {
    nn::Tensor t(nn::Shape{1, 1, h, w});
    for (std::size_t i = 0; i < mask.size(); ++i) t.data()[i] = mask[i] ? 1.0f : 0.0f;
    return t;
}

bool better(const config::TrainConfig& c, const EpochRow& row, double best) {
    const double m = c.selection_metric == "val_iou_building" ? row.val_iou_building : row.val_miou;
    return m > best;
}

double selection_value(const config::TrainConfig& c, const EpochRow& row) {
    return c.selection_metric == "val_iou_building" ? row.val_iou_building : row.val_miou;
}

void log_line(std::ostream* log, const std::string& s) {
    if (log) *log << s << std::endl;
}

}  // namespace

std::string history_header() {
    return "epoch,train_loss,val_loss,val_iou_building,val_miou,ramp_scale,learning_rate,best";
}

std::string history_line(const EpochRow& r) {
    return std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," + fmt(r.val_loss) + "," +
           fmt(r.val_iou_building) + "," + fmt(r.val_miou) + "," + fmt(r.ramp_scale) + "," +
           fmt(r.learning_rate) + "," + (r.best ? "1" : "0");
}

std::vector<LoadedTile> load_split(const data::DatasetManifest& manifest, data::Split split) {
    std::vector<LoadedTile> out;
    for (std::size_t i : manifest.indices(split)) {
        const auto& rec = manifest.tiles[i];
        data::TileSample t = data::load_tile(manifest, rec);
        out.push_back(LoadedTile{rec.scene_id, data::to_unit(t.image), std::move(t.mask)});
    }
    return out;
}

double learning_rate_at(const config::TrainConfig& c, int epoch) {
    if (c.lr_schedule == config::LrSchedule::constant) return c.learning_rate;
    return c.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / c.max_epochs));
}

nn::Tensor predict_tile(const models::SegmentationModel& model, const nn::Tensor& image,
                        const data::NormalizationSpec& norm, const tta::TtaPlan* plan) {
    if (plan) return tta::tta_predict(model, image, *plan, norm);
    return model.predict(data::normalize(image, norm));
}

metrics::MetricReport evaluate(const models::SegmentationModel& model, const std::vector<LoadedTile>& tiles,
                               const data::NormalizationSpec& norm, const metrics::MetricOptions& options,
                               const tta::TtaPlan* plan, const std::string& config_hash) {
    if (tiles.empty()) throw std::invalid_argument("evaluate: split has no tiles");
    metrics::MetricAccumulator acc(options);
    for (const auto& t : tiles) {
        const nn::Tensor p = predict_tile(model, t.image, norm, plan);
        acc.add_probabilities(p.values(), t.mask);
    }
    return acc.report(config_hash);
}

metrics::MetricReport evaluate(const models::SegmentationModel& model, const data::DatasetManifest& manifest,
                               data::Split split, const metrics::MetricOptions& options,
                               const tta::TtaPlan* plan, const std::string& config_hash) {
    const auto tiles = load_split(manifest, split);
    if (tiles.empty()) {
        throw std::invalid_argument("evaluate: " + data::to_string(split) + " split has no tiles");
    }
    return evaluate(model, tiles, manifest.normalization, options, plan, config_hash);
}

TrainResult train(const config::ExperimentConfig& cfg, const data::DatasetManifest& manifest,
                  const fs::path& out_dir, const TrainOptions& options) {
    const config::TrainConfig& tc = cfg.trainer;
    config::validate(tc);
    losses::validate(cfg.loss);
    augment::validate(cfg.augmentation);

    const auto train_tiles = load_split(manifest, data::Split::train);
    const auto val_tiles = load_split(manifest, data::Split::val);
    if (train_tiles.empty()) throw config::ConfigError("data.manifest", 0, "train split is empty");
    if (val_tiles.empty()) throw config::ConfigError("data.manifest", 0, "val split is empty");

    TrainResult result;
    result.config_hash = config::config_hash(cfg);
    result.best_checkpoint = out_dir / "best.ckpt";
    fs::create_directories(out_dir);

    auto model = models::build_model(cfg.model, tc.seed);
    if (options.init_hook) options.init_hook(*model);
    nn::AdamOptions ao;
    ao.learning_rate = tc.learning_rate;
    ao.beta1 = tc.beta1;
    ao.beta2 = tc.beta2;
    ao.epsilon = tc.epsilon;
    ao.weight_decay = tc.weight_decay;
    nn::Adam opt(model->store().parameters(), ao);
    const auto& params = model->store().parameters();

    const fs::path state_path = out_dir / "resume.state";
    int start_epoch = 0;
    double best = -1.0;
    if (options.resume) {
        if (!fs::exists(state_path)) throw std::runtime_error("no resume state at " + state_path.string());
        models::TensorArchive st = models::read_archive(state_path);
        if (st.header.value("config_hash", std::string()) != result.config_hash) {
            throw std::runtime_error("resume state was written by a different config");
        }
        models::TensorArchive weights;
        weights.header = json{{"spec", st.header.at("spec")}};
        for (auto& [name, t] : st.tensors) {
            if (name.rfind("adam.", 0) != 0) weights.tensors.emplace(name, t);
        }
        models::load_weights(weights, *model);
        for (std::size_t i = 0; i < params.size(); ++i) {
            opt.first_moments()[i] = st.tensors.at("adam.m." + params[i].name);
            opt.second_moments()[i] = st.tensors.at("adam.v." + params[i].name);
        }
        opt.set_steps(st.header.at("steps").get<std::int64_t>());
        start_epoch = st.header.at("epoch").get<int>();
        best = st.header.at("best_metric").get<double>();
        result.best_epoch = st.header.at("best_epoch").get<int>();
        for (const auto& r : st.header.at("history")) result.history.push_back(row_from_json(r));
        log_line(options.log, "resuming after epoch " + std::to_string(start_epoch));
    }

    std::ofstream history(out_dir / "history.csv", std::ios::trunc);
    std::ofstream timing(out_dir / "timing.csv", std::ios::trunc);
    history << history_header() << "\n";
    timing << "epoch,wall_seconds\n";
    for (const auto& r : result.history) {
        history << history_line(r) << "\n";
        timing << r.epoch << "," << fmt(r.wall_seconds) << "\n";
    }
    history.flush();
    timing.flush();

    const json ckpt_meta_base{{"config_hash", result.config_hash},
                              {"normalization", normalization_json(manifest.normalization)},
                              {"selection_metric", tc.selection_metric},
                              {"threshold", tc.threshold}};
    metrics::MetricOptions mo;
    mo.threshold = tc.threshold;

    const std::size_t n = train_tiles.size();
    int epochs_this_call = 0;
    for (int epoch = start_epoch; epoch < tc.max_epochs; ++epoch) {
        if (options.stop_after > 0 && epochs_this_call >= options.stop_after) break;
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = learning_rate_at(tc, epoch);
        opt.set_learning_rate(lr);
        const double ramp = cfg.augmentation.schedule.at(epoch);

        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        auto shuffle_rng = augment::substream(tc.seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng() % (i + 1)]);

        const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t b = 0; b < n; b += bs) {
            const std::size_t end = std::min(n, b + bs);
            if (tc.drop_last && end - b < bs && batches > 0) break;
            std::vector<nn::Tensor> xs, ys;
            for (std::size_t k = b; k < end; ++k) {
                const std::size_t idx = order[k];
                const LoadedTile& t = train_tiles[idx];
                augment::Sample s{t.image, t.mask};
                if (cfg.augment) {
                    augment::augment(s, cfg.augmentation, epoch, tc.seed, static_cast<std::uint64_t>(epoch), idx);
                }
                const nn::Shape sh = s.image.shape();
                xs.push_back(data::normalize(s.image, manifest.normalization));
                ys.push_back(mask_tensor(s.mask, sh.h, sh.w));
            }
            model->store().zero_grad();
            const nn::Var probs = model->forward(nn::constant(nn::stack_batch(xs)), nn::Mode::train);
            double value = 0.0;
            const nn::Var loss = losses::loss_node(probs, nn::stack_batch(ys), cfg.loss, &value);
            if (!std::isfinite(value)) {
                std::string ids;
                for (std::size_t k = b; k < end; ++k) ids += (ids.empty() ? "" : " ") + train_tiles[order[k]].scene_id;
                const std::string msg = "non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                                        std::to_string(batches) + " (tiles: " + ids + ")";
                log_line(options.log, msg);
                throw NonFiniteLoss(msg);
            }
            nn::backward(loss, nn::Tensor(nn::Shape{1, 1, 1, 1}, 1.0f));
            opt.step();
            loss_sum += value;
            ++batches;
        }

        // Validation loss is the per-tile loss averaged over tiles.
        metrics::MetricAccumulator acc(mo);
        double val_loss = 0.0;
        for (const auto& t : val_tiles) {
            const nn::Tensor p = model->predict(data::normalize(t.image, manifest.normalization));
            std::vector<double> pd(p.values().begin(), p.values().end());
            std::vector<double> gd(t.mask.begin(), t.mask.end());
            val_loss += losses::evaluate(cfg.loss, pd, gd).value;
            acc.add_probabilities(p.values(), t.mask);
        }
        const metrics::MetricReport rep = acc.report(result.config_hash);

        EpochRow row;
        row.epoch = epoch + 1;
        row.train_loss = loss_sum / batches;
        row.val_loss = val_loss / static_cast<double>(val_tiles.size());
        row.val_iou_building = rep.iou_building;
        row.val_miou = rep.miou;
        row.ramp_scale = cfg.augment ? ramp : 0.0;
        row.learning_rate = lr;
        row.best = better(tc, row, best);
        if (row.best) {
            best = selection_value(tc, row);
            result.best_epoch = row.epoch;
            json meta = ckpt_meta_base;
            meta["epoch"] = row.epoch;
            meta[tc.selection_metric] = best;
            models::save_checkpoint(result.best_checkpoint, *model, meta);
        }
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(row);

        history << history_line(row) << "\n";
        history.flush();
        timing << row.epoch << "," << fmt(row.wall_seconds) << "\n";
        timing.flush();

        json rows = json::array();
        for (const auto& r : result.history) rows.push_back(row_to_json(r));
        const json header{{"kind", "resume_state"},
                          {"spec", models::to_json(model->spec())},
                          {"config_hash", result.config_hash},
                          {"epoch", row.epoch},
                          {"steps", opt.steps()},
                          {"best_metric", best},
                          {"best_epoch", result.best_epoch},
                          {"history", rows}};
        auto tensors = models::model_tensors(*model);
        for (std::size_t i = 0; i < params.size(); ++i) {
            tensors.emplace_back("adam.m." + params[i].name, &opt.first_moments()[i]);
            tensors.emplace_back("adam.v." + params[i].name, &opt.second_moments()[i]);
        }
        models::write_archive(state_path, header, tensors);

        char buf[200];
        std::snprintf(buf, sizeof(buf), "epoch %d/%d loss %.5f val_loss %.5f val_iou %.4f val_miou %.4f%s (%.1fs)",
                      row.epoch, tc.max_epochs, row.train_loss, row.val_loss, row.val_iou_building, row.val_miou,
                      row.best ? " *" : "", row.wall_seconds);
        log_line(options.log, buf);
        ++epochs_this_call;
    }
    result.best_metric = best;
    return result;
}

}  // namespace bseg::trainer
