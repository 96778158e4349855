// SPDX-License-Identifier: Apache-2.0
#include "bseg/tta.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "bseg/nn/ops.hpp"

namespace bseg::tta {

using nlohmann::json;

std::string to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::hflip: return "hflip";
        case TransformKind::rotate: return "rotate";
        case TransformKind::rescale: return "rescale";
        case TransformKind::multiply: return "multiply";
    }
    return "hflip";
}

std::vector<TtaTransform> Variant::transforms() const {
    std::vector<TtaTransform> out;
    if (hflip) out.push_back({TransformKind::hflip, 0.0});
    if (rotation != 0) out.push_back({TransformKind::rotate, static_cast<double>(rotation)});
    if (scale != 1.0) out.push_back({TransformKind::rescale, scale});
    if (multiplier != 1.0) out.push_back({TransformKind::multiply, multiplier});
    return out;
}

std::string Variant::label() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "flip=%d rot=%d scale=%g mult=%g", hflip ? 1 : 0, rotation, scale,
                  multiplier);
    return buf;
}

namespace {

template <typename T>
std::vector<T> sorted_with(std::vector<T> v, T identity) {
    v.push_back(identity);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

TtaPlan TtaPlan::canonical() const {
    TtaPlan p = *this;
    p.flip_options = sorted_with(flip_options, false);
    p.rotation_degrees = sorted_with(rotation_degrees, 0);
    p.scale_factors = sorted_with(scale_factors, 1.0);
    p.multipliers = sorted_with(multipliers, 1.0);
    return p;
}

std::vector<Variant> TtaPlan::variants() const {
    validate(*this);
    const TtaPlan p = canonical();
    std::vector<Variant> out;
    for (bool f : p.flip_options) {
        for (int r : p.rotation_degrees) {
            for (double s : p.scale_factors) {
                for (double m : p.multipliers) out.push_back(Variant{f, r, s, m});
            }
        }
    }
    return out;
}

void validate(const TtaPlan& plan) {
    for (int r : plan.rotation_degrees) {
        if (r != 0 && r != 90 && r != 180 && r != 270) {
            throw std::invalid_argument("tta rotation must be one of 0, 90, 180, 270 (got " +
                                        std::to_string(r) + ")");
        }
    }
    for (double s : plan.scale_factors) {
        if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("tta scale factors must be > 0");
    }
    for (double m : plan.multipliers) {
        if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("tta multipliers must be > 0");
    }
    if (plan.merge != "mean") throw std::invalid_argument("tta merge must be 'mean' (got '" + plan.merge + "')");
    if (!(plan.threshold >= 0.0 && plan.threshold <= 1.0)) {
        throw std::invalid_argument("tta threshold must lie in [0, 1]");
    }
}

json to_json(const TtaPlan& plan) {
    const TtaPlan p = plan.canonical();
    json flips = json::array();
    for (bool f : p.flip_options) flips.push_back(f ? "hflip" : "identity");
    return json{{"flip", flips},
                {"rotation", p.rotation_degrees},
                {"scale", p.scale_factors},
                {"multiply", p.multipliers},
                {"merge", p.merge},
                {"threshold", p.threshold}};
}

TtaPlan plan_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("tta plan must be a JSON object");
    TtaPlan p;
    if (j.contains("preset")) {
        p = preset(j.at("preset").get<std::string>());
    }
    if (j.contains("flip")) {
        p.flip_options.clear();
        for (const auto& f : j.at("flip")) {
            const std::string s = f.get<std::string>();
            if (s == "identity") {
                p.flip_options.push_back(false);
            } else if (s == "hflip") {
                p.flip_options.push_back(true);
            } else {
                throw std::invalid_argument("tta flip option must be 'identity' or 'hflip' (got '" + s + "')");
            }
        }
    }
    if (j.contains("rotation")) p.rotation_degrees = j.at("rotation").get<std::vector<int>>();
    if (j.contains("scale")) p.scale_factors = j.at("scale").get<std::vector<double>>();
    if (j.contains("multiply")) p.multipliers = j.at("multiply").get<std::vector<double>>();
    p.merge = j.value("merge", p.merge);
    p.threshold = j.value("threshold", p.threshold);
    validate(p);
    return p;
}

std::vector<std::string> preset_names() { return {"method1", "method2", "method3"}; }

TtaPlan preset(const std::string& name) {
    TtaPlan p;
    p.flip_options = {false, true};
    if (name == "method1") {
        p.rotation_degrees = {0, 180};
        p.scale_factors = {1.0};
        p.multipliers = {0.9, 1.0, 1.1};
    } else if (name == "method2") {
        p.rotation_degrees = {0, 180};
        p.scale_factors = {0.25, 0.5, 0.75, 1.0};
        p.multipliers = {0.9, 1.0, 1.1};
    } else if (name == "method3") {
        p.rotation_degrees = {0, 90};
        p.scale_factors = {0.5, 0.75, 1.0};
        p.multipliers = {1.0};
    } else {
        throw std::invalid_argument("unknown tta preset '" + name + "' (valid: method1, method2, method3)");
    }
    return p;
}

TtaPlan identity_plan() { return TtaPlan{}; }

TtaPlan multiscale_plan(std::vector<double> scales) {
    TtaPlan p;
    p.scale_factors = std::move(scales);
    validate(p);
    return p;
}

int rescaled_extent(int extent, double scale, int multiple) {
    if (multiple < 1) throw std::invalid_argument("rescale: multiple must be >= 1");
    const long k = std::lround(extent * scale / multiple);
    if (k < 1) {
        throw std::invalid_argument("rescale " + std::to_string(scale) + " of extent " +
                                    std::to_string(extent) + " falls below the model minimum of " +
                                    std::to_string(multiple));
    }
    return static_cast<int>(k) * multiple;
}

nn::Tensor hflip(const nn::Tensor& t) {
    const nn::Shape s = t.shape();
    nn::Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float* src = t.plane(n, c);
            float* dst = out.plane(n, c);
            for (int y = 0; y < s.h; ++y) {
                const float* row = src + static_cast<std::size_t>(y) * s.w;
                std::reverse_copy(row, row + s.w, dst + static_cast<std::size_t>(y) * s.w);
            }
        }
    }
    return out;
}

nn::Tensor rotate_cw(const nn::Tensor& t, int degrees) {
    const int turns = ((degrees % 360) + 360) % 360;
    if (turns % 90 != 0) throw std::invalid_argument("rotate_cw: degrees must be a multiple of 90");
    if (turns == 0) return t;
    const nn::Shape s = t.shape();
    const bool swap = turns != 180;
    const nn::Shape o{s.n, s.c, swap ? s.w : s.h, swap ? s.h : s.w};
    nn::Tensor out(o);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float* src = t.plane(n, c);
            float* dst = out.plane(n, c);
            for (int y = 0; y < s.h; ++y) {
                for (int x = 0; x < s.w; ++x) {
                    int oy = y, ox = x;
                    if (turns == 90) {
                        oy = x;
                        ox = s.h - 1 - y;
                    } else if (turns == 180) {
                        oy = s.h - 1 - y;
                        ox = s.w - 1 - x;
                    } else {
                        oy = s.w - 1 - x;
                        ox = y;
                    }
                    dst[static_cast<std::size_t>(oy) * o.w + ox] = src[static_cast<std::size_t>(y) * s.w + x];
                }
            }
        }
    }
    return out;
}

nn::Tensor apply_forward(const nn::Tensor& image, const Variant& v, int multiple) {
    nn::Tensor t = image;
    if (v.hflip) t = hflip(t);
    if (v.rotation != 0) t = rotate_cw(t, v.rotation);
    if (v.scale != 1.0) {
        const nn::Shape s = t.shape();
        t = nn::resize_bilinear(t, rescaled_extent(s.h, v.scale, multiple),
                                rescaled_extent(s.w, v.scale, multiple));
    }
    if (v.multiplier != 1.0) {
        const float m = static_cast<float>(v.multiplier);
        for (float& x : t.values()) x = std::clamp(x * m, 0.0f, 1.0f);
    }
    return t;
}

nn::Tensor invert_prediction(const nn::Tensor& prediction, const Variant& v, int out_h, int out_w) {
    nn::Tensor t = prediction;
    if (v.scale != 1.0) {
        // Back to the rotated frame of the original image.
        const bool swap = v.rotation == 90 || v.rotation == 270;
        t = nn::resize_bilinear(t, swap ? out_w : out_h, swap ? out_h : out_w);
    }
    if (v.rotation != 0) t = rotate_cw(t, 360 - v.rotation);
    if (v.hflip) t = hflip(t);
    const nn::Shape s = t.shape();
    if (s.h != out_h || s.w != out_w) {
        throw std::invalid_argument("invert_prediction: map is " + nn::to_string(s) + ", expected " +
                                    std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    return t;
}

nn::Tensor merge_mean(const std::vector<nn::Tensor>& maps) {
    if (maps.empty()) throw std::invalid_argument("merge_mean: no maps");
    const nn::Shape s = maps.front().shape();
    std::vector<double> acc(s.numel(), 0.0);
    for (const auto& m : maps) {
        if (!(m.shape() == s)) throw std::invalid_argument("merge_mean: shape mismatch");
        const float* p = m.data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
    nn::Tensor out(s);
    const double k = static_cast<double>(maps.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<float>(acc[i] / k);
    return out;
}

nn::Tensor tta_predict(const models::SegmentationModel& model, const nn::Tensor& image,
                       const std::vector<Variant>& variants, const data::NormalizationSpec& norm) {
    const nn::Shape s = image.shape();
    if (s.n != 1 || s.c != 3) throw std::invalid_argument("tta_predict expects a 1 x 3 x H x W image");
    if (variants.empty()) throw std::invalid_argument("tta_predict: empty variant list");
    std::vector<nn::Tensor> maps;
    maps.reserve(variants.size());
    for (const auto& v : variants) {
        const nn::Tensor x = apply_forward(image, v, model.required_multiple());
        maps.push_back(invert_prediction(model.predict(data::normalize(x, norm)), v, s.h, s.w));
    }
    return merge_mean(maps);
}

nn::Tensor tta_predict(const models::SegmentationModel& model, const nn::Tensor& image,
                       const TtaPlan& plan, const data::NormalizationSpec& norm) {
    return tta_predict(model, image, plan.variants(), norm);
}

}  // namespace bseg::tta
