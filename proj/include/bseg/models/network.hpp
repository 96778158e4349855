// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bseg/models/spec.hpp"
#include "bseg/nn/layers.hpp"

namespace bseg::models {

/// Raised when input dims are not a multiple of the model's total stride.
class PaddingError : public std::invalid_argument {
public:
    PaddingError(int height, int width, int required_multiple);
    [[nodiscard]] int required_multiple() const { return multiple_; }

private:
    int multiple_;
};

class EncoderBlock {
public:
    EncoderBlock(nn::ParameterStore& store, const std::string& name, const BlockSpec& spec,
                 int in_channels);

    nn::Var operator()(const nn::Var& x, nn::Mode mode) const;
    [[nodiscard]] int out_channels() const { return out_channels_; }

private:
    BlockSpec spec_;
    int out_channels_;
    bool residual_ = false;
    std::optional<nn::ConvBnAct> a_, b_, c_, shortcut_;
    std::optional<nn::Conv2d> se_reduce_, se_expand_;
    nn::Activation se_inner_ = nn::Activation::relu;
    nn::Activation se_gate_ = nn::Activation::sigmoid;
};

class Encoder {
public:
    Encoder(nn::ParameterStore& store, const EncoderSpec& spec);

    /// One feature map per stage, in stride order.
    std::vector<nn::Var> operator()(const nn::Var& x, nn::Mode mode) const;
    [[nodiscard]] const std::vector<int>& stage_channels() const { return channels_; }

private:
    std::vector<std::vector<EncoderBlock>> stages_;
    std::vector<int> channels_;
};

/// Node X(i, j) of the nested skip grid; level i sits at stride 2^(i+1).
struct NestedNode {
    int level = 0;
    int column = 0;
    std::vector<std::pair<int, int>> same_level_inputs;  // X(i, 0..j-1)
    std::pair<int, int> upsampled_input{0, 0};           // X(i+1, j-1)
    int in_channels = 0;
    int out_channels = 0;
};

class UnetPlusPlusDecoder {
public:
    UnetPlusPlusDecoder(nn::ParameterStore& store, const DecoderSpec& spec,
                        const std::vector<int>& stage_channels);

    /// Returns the single-channel logits at the input resolution.
    nn::Var operator()(const std::vector<nn::Var>& stages, int out_h, int out_w,
                       nn::Mode mode) const;
    /// Nodes with column >= 1, in evaluation order.
    [[nodiscard]] const std::vector<NestedNode>& topology() const { return nodes_; }

private:
    struct Block {
        nn::ConvBnAct first, second;
    };
    int depth_;
    std::vector<NestedNode> nodes_;
    std::vector<Block> blocks_;
    Block final_;
    nn::Conv2d head_;
};

class DeepLabV3PlusDecoder {
public:
    DeepLabV3PlusDecoder(nn::ParameterStore& store, const DecoderSpec& spec,
                         const std::vector<int>& stage_channels, int low_level_stage);

    nn::Var operator()(const std::vector<nn::Var>& stages, int out_h, int out_w,
                       nn::Mode mode) const;
    /// Output channels of each ASPP branch (1x1, atrous rates..., image pooling).
    [[nodiscard]] std::vector<int> aspp_branch_channels() const;
    [[nodiscard]] int aspp_output_channels() const { return project_.out_channels(); }

private:
    int low_level_stage_;
    nn::ConvBnAct aspp_1x1_;
    std::vector<nn::ConvBnAct> aspp_atrous_;
    nn::Conv2d aspp_pool_;
    nn::ConvBnAct project_;
    nn::ConvBnAct low_level_;
    nn::ConvBnAct fuse_;
    nn::Conv2d head_;
};

class SegmentationModel {
public:
    SegmentationModel(ModelSpec spec, std::uint64_t seed);
    SegmentationModel(const SegmentationModel&) = delete;
    SegmentationModel& operator=(const SegmentationModel&) = delete;

    /// Normalized N x C x H x W input to N x 1 x H x W building probabilities.
    nn::Var forward(const nn::Var& x, nn::Mode mode) const;
    /// Evaluation-mode forward without graph recording.
    [[nodiscard]] nn::Tensor predict(const nn::Tensor& batch) const;
    /// Encoder feature maps for a single image, evaluation mode.
    [[nodiscard]] std::vector<nn::Tensor> stage_activations(const nn::Tensor& image) const;

    [[nodiscard]] const ModelSpec& spec() const { return spec_; }
    [[nodiscard]] const EncoderSpec& built_encoder() const { return built_encoder_; }
    [[nodiscard]] nn::ParameterStore& store() { return store_; }
    [[nodiscard]] const nn::ParameterStore& store() const { return store_; }
    [[nodiscard]] std::size_t parameter_count() const { return store_.parameter_count(); }
    [[nodiscard]] int required_multiple() const { return multiple_; }

    [[nodiscard]] const UnetPlusPlusDecoder* unetpp() const { return unetpp_.get(); }
    [[nodiscard]] const DeepLabV3PlusDecoder* deeplab() const { return deeplab_.get(); }

private:
    void check_input(const nn::Shape& s) const;

    ModelSpec spec_;
    EncoderSpec built_encoder_;
    mutable nn::ParameterStore store_;
    std::unique_ptr<Encoder> encoder_;
    std::unique_ptr<UnetPlusPlusDecoder> unetpp_;
    std::unique_ptr<DeepLabV3PlusDecoder> deeplab_;
    int multiple_ = 1;
};

/// Validates the pair and builds a freshly initialised model.
std::unique_ptr<SegmentationModel> build_model(const EncoderSpec& encoder,
                                               const DecoderSpec& decoder, std::uint64_t seed);
std::unique_ptr<SegmentationModel> build_model(const ModelSpec& spec, std::uint64_t seed);

/// Channel mean of a 1 x C x H x W map, as a 1 x 1 x H x W tensor.
nn::Tensor channel_mean(const nn::Tensor& map);

}  // namespace bseg::models
