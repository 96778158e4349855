// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "bseg/nn/ops.hpp"

namespace bseg::models {

/// One convolution or pooling window as seen by the receptive-field recurrence.
struct LayerConfig {
    int kernel = 1;
    int stride = 1;
    int dilation = 1;
    int padding = 0;
};

void validate(const LayerConfig& layer);

enum class EncoderFamily { vgg, resnet, efficientnet, mobilenet };

enum class BlockKind {
    conv,               // conv + BN + activation
    max_pool,           // max pooling window
    basic,              // two 3x3 convs with identity/projection shortcut
    bottleneck,         // 1x1 (strided) -> 3x3 -> 1x1, out = 4 x width
    inverted_residual,  // 1x1 expand -> depthwise kxk -> (SE) -> 1x1 project
};

struct BlockSpec {
    BlockKind kind = BlockKind::conv;
    int out_channels = 0;  // ignored for max_pool
    int kernel = 3;
    int stride = 1;
    int dilation = 1;
    int padding = -1;         // max_pool only; -1 means kernel / 2 when kernel is odd, else 0
    int expand_channels = 0;  // inverted_residual hidden width
    bool squeeze_excite = false;
    nn::Activation activation = nn::Activation::relu;
};

struct StageSpec {
    std::vector<BlockSpec> blocks;
};

/// Declarative encoder. Each stage ends at one of the feature strides 2, 4, 8, 16, 32.
struct EncoderSpec {
    EncoderFamily family = EncoderFamily::vgg;
    std::string variant;
    double width_multiplier = 1.0;
    int in_channels = 3;
    std::vector<StageSpec> stages;
};

enum class DecoderKind { unetpp, deeplabv3plus };

struct DecoderSpec {
    DecoderKind kind = DecoderKind::unetpp;
    // U-Net++: dense grid depth (must equal the encoder stage count) and block widths.
    // decoder_channels[0] is the full-resolution block, [i] the block at stride 2^i.
    int nested_depth = 5;
    std::vector<int> decoder_channels;
    // DeepLabV3+.
    std::vector<int> atrous_rates{6, 12, 18};
    int aspp_channels = 256;
    int low_level_channels = 48;
    int output_stride = 16;
};

struct ModelSpec {
    EncoderSpec encoder;
    DecoderSpec decoder;
};

/// Channel count after the width shrink (never below 4).
int scale_width(int channels, double width_multiplier);

EncoderSpec vgg_encoder(int depth, double width_multiplier = 1.0);
EncoderSpec resnet_encoder(int depth, double width_multiplier = 1.0);
EncoderSpec efficientnet_encoder(int compound_index, double width_multiplier = 1.0);
EncoderSpec mobilenet_encoder(int version, double width_multiplier = 1.0);
/// Accepts names such as "vgg16", "resnet50", "efficientnet-b3", "mobilenet-v3".
EncoderSpec encoder_by_name(const std::string& name, double width_multiplier = 1.0);
std::vector<std::string> known_encoder_names();

DecoderSpec default_decoder(DecoderKind kind, const EncoderSpec& encoder);

/// Channels produced by each stage and the cumulative stride at its end.
std::vector<int> stage_channels(const EncoderSpec& spec);
std::vector<int> stage_strides(const EncoderSpec& spec);

/// Throws std::invalid_argument describing the first violated constraint.
void validate(const EncoderSpec& spec);
void validate(const DecoderSpec& spec);
void validate(const ModelSpec& spec);

/// Replaces the trailing stride-2 steps with dilation so that features stop at
/// `output_stride`.
EncoderSpec dilate_to_output_stride(const EncoderSpec& spec, int output_stride);

/// Expands a block into the layers on its longest path (identity shortcuts ignored).
std::vector<LayerConfig> block_layers(const BlockSpec& block, int in_channels);
std::vector<LayerConfig> block_layers(const BlockSpec& block);
std::vector<LayerConfig> encoder_layers(const EncoderSpec& spec);

/// r <- r + (k_eff - 1) * j, j <- j * s, with k_eff = k + (k - 1)(d - 1).
int receptive_field(const std::vector<LayerConfig>& layers);

struct StageReceptiveField {
    int stage = 0;
    int stride = 1;
    int channels = 0;
    int layers = 0;
    int receptive_field = 1;
};

std::vector<StageReceptiveField> receptive_field_table(const EncoderSpec& spec);

std::string to_string(EncoderFamily f);
std::string to_string(BlockKind k);
std::string to_string(DecoderKind k);

nlohmann::json to_json(const EncoderSpec& spec);
nlohmann::json to_json(const DecoderSpec& spec);
nlohmann::json to_json(const ModelSpec& spec);
EncoderSpec encoder_from_json(const nlohmann::json& j);
DecoderSpec decoder_from_json(const nlohmann::json& j, const EncoderSpec& encoder);
ModelSpec model_spec_from_json(const nlohmann::json& j);

bool operator==(const BlockSpec& a, const BlockSpec& b);
bool operator==(const EncoderSpec& a, const EncoderSpec& b);
bool operator==(const DecoderSpec& a, const DecoderSpec& b);

}  // namespace bseg::models
