// SPDX-License-Identifier: Apache-2.0
#include "bseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bseg::augment {

using nlohmann::json;

std::string to_string(OpKind kind) {
    switch (kind) {
        case OpKind::rotate: return "rotate";
        case OpKind::affine: return "affine";
        case OpKind::translate: return "translate";
        case OpKind::invert_colors: return "invert_colors";
        case OpKind::random_contrast: return "random_contrast";
        case OpKind::random_brightness: return "random_brightness";
        case OpKind::horizontal_flip: return "horizontal_flip";
    }
    return "rotate";
}

OpKind op_kind_from_string(const std::string& name) {
    for (auto k : {OpKind::rotate, OpKind::affine, OpKind::translate, OpKind::invert_colors,
                   OpKind::random_contrast, OpKind::random_brightness, OpKind::horizontal_flip}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown augmentation op '" + name + "'");
}

bool is_geometric(OpKind kind) {
    return kind == OpKind::rotate || kind == OpKind::affine || kind == OpKind::translate ||
           kind == OpKind::horizontal_flip;
}

double RampSchedule::at(int epoch) const {
    if (epoch <= 0) return floor;
    if (epoch >= epoch_max) return 1.0;
    return floor + (1.0 - floor) * static_cast<double>(epoch) / epoch_max;
}

std::vector<AugmentationOp> AugmentationPolicy::default_ops() {
    return {{OpKind::rotate, -30.0, 30.0},         {OpKind::affine, -0.2, 0.2},
            {OpKind::translate, -0.1, 0.1},        {OpKind::invert_colors, 0.0, 0.0},
            {OpKind::random_contrast, -0.3, 0.3},  {OpKind::random_brightness, -0.2, 0.2},
            {OpKind::horizontal_flip, 0.0, 0.0}};
}

void validate(const AugmentationPolicy& p) {
    if (p.ops.empty()) throw std::invalid_argument("augmentation.ops must not be empty");
    if (!(p.apply_probability >= 0.0 && p.apply_probability <= 1.0)) {
        throw std::invalid_argument("augmentation.apply_probability must lie in [0, 1]");
    }
    if (p.schedule.epoch_max < 1) throw std::invalid_argument("augmentation.epoch_max must be >= 1");
    if (!(p.schedule.floor > 0.0 && p.schedule.floor <= 1.0)) {
        throw std::invalid_argument("augmentation.ramp_floor must lie in (0, 1]");
    }
    for (const auto& op : p.ops) {
        if (!(op.lo <= op.hi)) {
            throw std::invalid_argument("augmentation op " + to_string(op.kind) + ": lo > hi");
        }
    }
}

json to_json(const AugmentationPolicy& p) {
    json ops = json::array();
    for (const auto& op : p.ops) ops.push_back(json{{"kind", to_string(op.kind)}, {"range", {op.lo, op.hi}}});
    return json{{"ops", ops},
                {"apply_probability", p.apply_probability},
                {"epoch_max", p.schedule.epoch_max},
                {"ramp_floor", p.schedule.floor}};
}

AugmentationPolicy policy_from_json(const json& j) {
    AugmentationPolicy p;
    if (j.contains("ops")) {
        p.ops.clear();
        for (const auto& o : j.at("ops")) {
            AugmentationOp op;
            op.kind = op_kind_from_string(o.at("kind").get<std::string>());
            if (o.contains("range")) {
                const auto r = o.at("range").get<std::vector<double>>();
                if (r.size() != 2) throw std::invalid_argument("augmentation op range needs 2 values");
                op.lo = r[0];
                op.hi = r[1];
            }
            p.ops.push_back(op);
        }
    }
    p.apply_probability = j.value("apply_probability", p.apply_probability);
    p.schedule.epoch_max = j.value("epoch_max", p.schedule.epoch_max);
    p.schedule.floor = j.value("ramp_floor", p.schedule.floor);
    validate(p);
    return p;
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t worker, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),   static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(worker), static_cast<std::uint32_t>(worker >> 32),
                      static_cast<std::uint32_t>(index),  static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

SampledOp sample_op(const AugmentationPolicy& policy, int epoch, std::mt19937_64& rng) {
    SampledOp s;
    // Draw all three numbers every time so the stream position is independent of the outcome.
    const double gate = unit_draw(rng);
    const double pick = unit_draw(rng);
    const double mag = unit_draw(rng);
    s.applied = gate < policy.apply_probability;
    s.index = std::min(policy.ops.size() - 1,
                       static_cast<std::size_t>(pick * static_cast<double>(policy.ops.size())));
    s.op = policy.ops[s.index];
    const double scale = policy.schedule.at(epoch);
    s.magnitude = (s.op.lo + (s.op.hi - s.op.lo) * mag) * scale;
    return s;
}

namespace {

// Output pixel (x, y) samples the source at map(x, y).
template <typename Map>
void warp(Sample& s, Map map) {
    const nn::Shape sh = s.image.shape();
    const int h = sh.h;
    const int w = sh.w;
    nn::Tensor out(sh);
    std::vector<std::uint8_t> mask(s.mask.size(), 0);
    float fill[3];
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const float* p = s.image.plane(0, c);
        for (std::size_t i = 0; i < sh.plane(); ++i) acc += p[i];
        fill[c] = static_cast<float>(acc / static_cast<double>(sh.plane()));
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sx = 0.0, sy = 0.0;
            map(x, y, sx, sy);
            const std::size_t o = static_cast<std::size_t>(y) * w + x;
            const long nx = std::lround(sx);
            const long ny = std::lround(sy);
            if (nx >= 0 && nx < w && ny >= 0 && ny < h) {
                mask[o] = s.mask[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)];
            }
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int c = 0; c < 3; ++c) {
                const float* p = s.image.plane(0, c);
                auto tap = [&](int yy, int xx) -> double {
                    if (xx < 0 || xx >= w || yy < 0 || yy >= h) return fill[c];
                    return p[static_cast<std::size_t>(yy) * w + xx];
                };
                const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                                 fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
                out.plane(0, c)[o] = static_cast<float>(v);
            }
        }
    }
    s.image = std::move(out);
    s.mask = std::move(mask);
}

template <typename F>
void per_pixel(Sample& s, F f) {
    const nn::Shape sh = s.image.shape();
    for (int c = 0; c < sh.c; ++c) {
        float* p = s.image.plane(0, c);
        double acc = 0.0;
        for (std::size_t i = 0; i < sh.plane(); ++i) acc += p[i];
        const float mean = static_cast<float>(acc / static_cast<double>(sh.plane()));
        for (std::size_t i = 0; i < sh.plane(); ++i) p[i] = std::clamp(f(p[i], mean), 0.0f, 1.0f);
    }
}

}  // namespace

void apply(Sample& s, const AugmentationOp& op, double magnitude) {
    const nn::Shape sh = s.image.shape();
    if (sh.n != 1 || sh.c != 3) throw std::invalid_argument("augment: expects a 1 x 3 x H x W image");
    if (s.mask.size() != sh.plane()) throw std::invalid_argument("augment: mask dims differ from image");
    const double lo = std::min(op.lo, 0.0);
    const double hi = std::max(op.hi, 0.0);
    if (!(magnitude >= lo && magnitude <= hi)) {
        throw std::invalid_argument("augment: magnitude " + std::to_string(magnitude) + " outside [" +
                                    std::to_string(lo) + ", " + std::to_string(hi) + "] for " +
                                    to_string(op.kind));
    }
    const double cx = (sh.w - 1) / 2.0;
    const double cy = (sh.h - 1) / 2.0;
    switch (op.kind) {
        case OpKind::horizontal_flip: {
            const int w = sh.w;
            for (int c = 0; c < 3; ++c) {
                float* p = s.image.plane(0, c);
                for (int y = 0; y < sh.h; ++y) std::reverse(p + static_cast<std::ptrdiff_t>(y) * w, p + static_cast<std::ptrdiff_t>(y + 1) * w);
            }
            for (int y = 0; y < sh.h; ++y) {
                std::reverse(s.mask.begin() + static_cast<std::ptrdiff_t>(y) * w,
                             s.mask.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
            }
            return;
        }
        case OpKind::rotate: {
            if (magnitude == 0.0) return;
            const double rad = magnitude * std::numbers::pi / 180.0;
            const double cs = std::cos(rad);
            const double sn = std::sin(rad);
            warp(s, [&](int x, int y, double& sx, double& sy) {
                const double dx = x - cx;
                const double dy = y - cy;
                sx = cs * dx + sn * dy + cx;
                sy = -sn * dx + cs * dy + cy;
            });
            return;
        }
        case OpKind::affine: {
            if (magnitude == 0.0) return;
            warp(s, [&](int x, int y, double& sx, double& sy) {
                sx = x - magnitude * (y - cy);
                sy = y;
            });
            return;
        }
        case OpKind::translate: {
            if (magnitude == 0.0) return;
            const double tx = magnitude * sh.w;
            const double ty = magnitude * sh.h;
            warp(s, [&](int x, int y, double& sx, double& sy) {
                sx = x - tx;
                sy = y - ty;
            });
            return;
        }
        case OpKind::invert_colors:
            per_pixel(s, [](float v, float) { return 1.0f - v; });
            return;
        case OpKind::random_contrast: {
            const float k = static_cast<float>(1.0 + magnitude);
            per_pixel(s, [k](float v, float mean) { return mean + k * (v - mean); });
            return;
        }
        case OpKind::random_brightness: {
            const float d = static_cast<float>(magnitude);
            per_pixel(s, [d](float v, float) { return v + d; });
            return;
        }
    }
}

SampledOp augment(Sample& sample, const AugmentationPolicy& policy, int epoch, std::uint64_t seed,
                  std::uint64_t worker, std::uint64_t index) {
    auto rng = substream(seed, worker, index);
    SampledOp s = sample_op(policy, epoch, rng);
    if (s.applied) apply(sample, s.op, s.magnitude);
    return s;
}

}  // namespace bseg::augment
