// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "bseg/augment.hpp"
#include "bseg/losses.hpp"
#include "bseg/models/spec.hpp"
#include "bseg/tta.hpp"

namespace bseg::config {

/// Config problem with a field path and, when known, the 1-based source line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, int line, const std::string& message);

    [[nodiscard]] const std::string& field() const { return field_; }
    [[nodiscard]] int line() const { return line_; }

private:
    std::string field_;
    int line_;
};

struct DataConfig {
    std::filesystem::path manifest;  // resolved against the config file directory
    std::string eval_split = "test";
};

enum class LrSchedule { constant, cosine };

std::string to_string(LrSchedule s);

struct TrainConfig {
    int batch_size = 8;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    LrSchedule lr_schedule = LrSchedule::constant;
    int max_epochs = 20;
    std::uint64_t seed = 0;
    std::string selection_metric = "val_miou";
    double threshold = 0.5;
    bool drop_last = false;
};

void validate(const TrainConfig& c);

struct ExperimentConfig {
    DataConfig data;
    models::ModelSpec model;
    losses::LossConfig loss;
    bool augment = true;
    augment::AugmentationPolicy augmentation;
    std::optional<tta::TtaPlan> tta;
    TrainConfig trainer;
};

nlohmann::json to_json(const losses::LossConfig& c);
losses::LossConfig loss_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Canonical form: every section with every field, defaults filled in.
nlohmann::json to_json(const ExperimentConfig& c);
/// `base` resolves a relative data.manifest. Throws ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
/// Parses text; errors carry the source line of the offending field.
ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON dump.
std::string config_hash(const ExperimentConfig& c);

/// 1-based line of `"key"` found after the section key, or 0.
int locate_field(const std::string& text, const std::string& dotted_field);

}  // namespace bseg::config
