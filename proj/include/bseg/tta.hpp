// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "bseg/data/raster.hpp"
#include "bseg/models/network.hpp"
#include "bseg/nn/tensor.hpp"

namespace bseg::tta {

enum class TransformKind { hflip, rotate, rescale, multiply };

std::string to_string(TransformKind kind);

struct TtaTransform {
    TransformKind kind = TransformKind::hflip;
    double parameter = 0.0;  // degrees, scale factor or multiplier; unused for hflip

    [[nodiscard]] bool geometric() const { return kind != TransformKind::multiply; }
};

/// One member of the cross product. Forward order: flip, clockwise rotation,
/// rescale, multiply. The inverse runs in reverse and skips multiply.
struct Variant {
    bool hflip = false;
    int rotation = 0;  // 0, 90, 180 or 270, clockwise
    double scale = 1.0;
    double multiplier = 1.0;

    [[nodiscard]] bool identity() const {
        return !hflip && rotation == 0 && scale == 1.0 && multiplier == 1.0;
    }
    [[nodiscard]] std::vector<TtaTransform> transforms() const;
    [[nodiscard]] std::string label() const;
    friend bool operator==(const Variant&, const Variant&) = default;
};

struct TtaPlan {
    std::vector<bool> flip_options{false};
    std::vector<int> rotation_degrees{0};
    std::vector<double> scale_factors{1.0};
    std::vector<double> multipliers{1.0};
    std::string merge = "mean";
    double threshold = 0.5;

    /// Identity members are added, duplicates dropped, each set sorted ascending.
    [[nodiscard]] TtaPlan canonical() const;
    /// Cross product of the canonical sets, flip-major, multiplier-minor.
    [[nodiscard]] std::vector<Variant> variants() const;
    [[nodiscard]] std::size_t size() const { return variants().size(); }
};

void validate(const TtaPlan& plan);
nlohmann::json to_json(const TtaPlan& plan);
/// Accepts {"preset": name} or explicit {"flip", "rotation", "scale", "multiply"} columns.
TtaPlan plan_from_json(const nlohmann::json& j);

TtaPlan preset(const std::string& name);
std::vector<std::string> preset_names();
TtaPlan identity_plan();
/// Identity flip/rotation/multiplier with the given scales.
TtaPlan multiscale_plan(std::vector<double> scales);

/// Side length after rescaling, rounded to the nearest multiple of `multiple`.
/// Throws when the result falls below `multiple`.
int rescaled_extent(int extent, double scale, int multiple);

/// Forward transform of a 1 x C x H x W image with values in [0, 1].
nn::Tensor apply_forward(const nn::Tensor& image, const Variant& v, int multiple);
/// Maps a 1 x C x h x w prediction back to the original H x W geometry.
nn::Tensor invert_prediction(const nn::Tensor& prediction, const Variant& v, int out_h, int out_w);

/// Clockwise quarter-turn rotation and horizontal mirror on every plane.
nn::Tensor rotate_cw(const nn::Tensor& t, int degrees);
nn::Tensor hflip(const nn::Tensor& t);

/// Elementwise arithmetic mean, summed in double in list order.
nn::Tensor merge_mean(const std::vector<nn::Tensor>& maps);

/// `image` is 1 x 3 x H x W in [0, 1]. Returns 1 x 1 x H x W merged probabilities.
nn::Tensor tta_predict(const models::SegmentationModel& model, const nn::Tensor& image,
                       const std::vector<Variant>& variants, const data::NormalizationSpec& norm);
nn::Tensor tta_predict(const models::SegmentationModel& model, const nn::Tensor& image,
                       const TtaPlan& plan, const data::NormalizationSpec& norm);

}  // namespace bseg::tta
