// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace bseg::metrics {

struct ClassCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    [[nodiscard]] std::uint64_t total() const { return tp + fp + fn + tn; }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct ConfusionCounts {
    ClassCounts building;
    ClassCounts background;

    ConfusionCounts& operator+=(const ConfusionCounts& other);
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b);

/// Adds the per-pixel 2x2 tally of two binary masks (nonzero = building).
void accumulate(ConfusionCounts& counts, std::span<const std::uint8_t> pred,
                std::span<const std::uint8_t> gt);
ConfusionCounts count(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Building mask from a probability map: p >= threshold.
std::vector<std::uint8_t> binarize(std::span<const float> probs, double threshold = 0.5);

/// tp / (tp + fp + fn); 1.0 when the union is empty.
double iou(const ClassCounts& c);
/// Mean of building and background IoU.
double miou(const ConfusionCounts& counts);

enum class Aggregation { micro, macro };

struct MetricOptions {
    double threshold = 0.5;
    Aggregation aggregation = Aggregation::micro;
    bool exclude_vacuous = false;  // drop empty-union classes from mIoU instead of scoring 1.0
};

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& name);

struct MetricReport {
    double iou_building = 0.0;
    double iou_background = 0.0;
    double miou = 0.0;
    ConfusionCounts counts;
    std::uint64_t pixels = 0;
    std::uint64_t images = 0;
    MetricOptions options;
    bool building_in_mean = true;
    bool background_in_mean = true;
    std::string fingerprint;

    [[nodiscard]] nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
};

/// Per-image confusion tallies, reduced into a report on demand.
class MetricAccumulator {
public:
    explicit MetricAccumulator(MetricOptions options = {}) : options_(options) {}

    void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
    void add_probabilities(std::span<const float> probs, std::span<const std::uint8_t> gt);
    void add_counts(const ConfusionCounts& counts);
    void merge(const MetricAccumulator& other);

    [[nodiscard]] const ConfusionCounts& totals() const { return totals_; }
    [[nodiscard]] const std::vector<ConfusionCounts>& per_image() const { return per_image_; }
    [[nodiscard]] MetricReport report(const std::string& config_hash = "") const;

private:
    MetricOptions options_;
    ConfusionCounts totals_;
    std::vector<ConfusionCounts> per_image_;
};

/// Report from aggregate counts only (micro).
MetricReport make_report(const ConfusionCounts& counts, const MetricOptions& options = {},
                         const std::string& config_hash = "");

/// Fingerprint string recording the config hash and evaluation options.
std::string fingerprint(const std::string& config_hash, const MetricOptions& options);

/// Background IoU implied by a building IoU and the two-class mean.
double implied_background_iou(double building_iou, double miou);

/// Returns every violated consistency rule; empty when the report is coherent.
std::vector<std::string> check_report(const MetricReport& report, double tolerance = 1e-12);
std::vector<std::string> check_report(const nlohmann::json& report, double tolerance = 1e-12);

}  // namespace bseg::metrics
