// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bseg/config.hpp"
#include "bseg/data/manifest.hpp"
#include "bseg/metrics.hpp"
#include "bseg/models/network.hpp"
#include "bseg/tta.hpp"

namespace bseg::trainer {

struct EpochRow {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_iou_building = 0.0;
    double val_miou = 0.0;
    double ramp_scale = 0.0;
    double learning_rate = 0.0;
    bool best = false;
    double wall_seconds = 0.0;  // kept out of history.csv
};

std::string history_header();
std::string history_line(const EpochRow& row);

/// Thrown when a batch produces a NaN or infinite loss.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    bool resume = false;
    std::ostream* log = nullptr;
    /// Stop after this many epochs in this call; 0 = no limit.
    int stop_after = 0;
    /// Runs once on the freshly built model, before any resume state is applied
    /// (e.g. to load pretrained encoder weights).
    std::function<void(models::SegmentationModel&)> init_hook;
};

struct TrainResult {
    std::vector<EpochRow> history;
    int best_epoch = 0;
    double best_metric = 0.0;
    std::filesystem::path best_checkpoint;
    std::string config_hash;
};

/// In-memory tile: 1 x 3 x H x W image in [0, 1] and its 0/1 mask.
struct LoadedTile {
    std::string scene_id;
    nn::Tensor image;
    std::vector<std::uint8_t> mask;
};

std::vector<LoadedTile> load_split(const data::DatasetManifest& manifest, data::Split split);

/// Learning rate for a 0-based epoch under the configured schedule.
double learning_rate_at(const config::TrainConfig& c, int epoch);

/// Writes history.csv, timing.csv, best.ckpt and resume.state under `out_dir`.
TrainResult train(const config::ExperimentConfig& config, const data::DatasetManifest& manifest,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});

/// Per-tile predictions, merged via TTA when `plan` is given.
nn::Tensor predict_tile(const models::SegmentationModel& model, const nn::Tensor& image,
                        const data::NormalizationSpec& norm, const tta::TtaPlan* plan = nullptr);

metrics::MetricReport evaluate(const models::SegmentationModel& model, const std::vector<LoadedTile>& tiles,
                               const data::NormalizationSpec& norm, const metrics::MetricOptions& options,
                               const tta::TtaPlan* plan = nullptr, const std::string& config_hash = "");
metrics::MetricReport evaluate(const models::SegmentationModel& model, const data::DatasetManifest& manifest,
                               data::Split split, const metrics::MetricOptions& options = {},
                               const tta::TtaPlan* plan = nullptr, const std::string& config_hash = "");

}  // namespace bseg::trainer
