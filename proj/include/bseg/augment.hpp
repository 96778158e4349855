// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "bseg/nn/tensor.hpp"

namespace bseg::augment {

enum class OpKind {
    rotate,             // degrees
    affine,             // area-preserving horizontal shear factor
    translate,          // fraction of the side, applied on both axes
    invert_colors,      // no magnitude
    random_contrast,    // multiplicative delta around the channel mean
    random_brightness,  // additive delta on [0, 1] intensities
    horizontal_flip,    // no magnitude
};

std::string to_string(OpKind kind);
OpKind op_kind_from_string(const std::string& name);
bool is_geometric(OpKind kind);

struct AugmentationOp {
    OpKind kind = OpKind::horizontal_flip;
    double lo = 0.0;
    double hi = 0.0;
};

/// Linear ramp from `floor` at epoch 0 to 1.0 at `epoch_max`, flat afterwards.
struct RampSchedule {
    int epoch_max = 20;
    double floor = 0.25;

    [[nodiscard]] double at(int epoch) const;
};

struct AugmentationPolicy {
    std::vector<AugmentationOp> ops = default_ops();
    double apply_probability = 0.5;
    RampSchedule schedule;

    static std::vector<AugmentationOp> default_ops();
};

void validate(const AugmentationPolicy& policy);
nlohmann::json to_json(const AugmentationPolicy& policy);
AugmentationPolicy policy_from_json(const nlohmann::json& j);

struct SampledOp {
    bool applied = false;
    std::size_t index = 0;
    AugmentationOp op;
    double magnitude = 0.0;
};

/// Independent stream for (seed, worker, sample index).
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t worker, std::uint64_t index);

/// Uniform in [0, 1) from 53 random bits.
double unit_draw(std::mt19937_64& rng);

/// Bernoulli(p) gate, uniform op choice, magnitude uniform in [lo, hi] * ramp(epoch).
SampledOp sample_op(const AugmentationPolicy& policy, int epoch, std::mt19937_64& rng);

/// Image as 1 x 3 x H x W in [0, 1] plus a 0/1 mask of H x W.
struct Sample {
    nn::Tensor image;
    std::vector<std::uint8_t> mask;
};

/// Applies one op. Geometric ops move image (bilinear, channel-mean fill) and
/// mask (nearest, fill 0) together; photometric ops leave the mask untouched.
/// Throws when `magnitude` lies outside [min(lo, 0), max(hi, 0)].
void apply(Sample& sample, const AugmentationOp& op, double magnitude);

/// sample_op + apply on the stream for (seed, worker, index).
SampledOp augment(Sample& sample, const AugmentationPolicy& policy, int epoch, std::uint64_t seed,
                  std::uint64_t worker, std::uint64_t index);

}  // namespace bseg::augment
