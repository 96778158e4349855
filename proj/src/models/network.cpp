// SPDX-License-Identifier: Apache-2.0
#include "bseg/models/network.hpp"

#include <algorithm>
#include <string>

namespace bseg::models {

using nn::Activation;
using nn::ConvBnAct;
using nn::Mode;
using nn::Var;

PaddingError::PaddingError(int height, int width, int required_multiple)
    : std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                            " is not divisible by the model stride; pad to a multiple of " +
                            std::to_string(required_multiple)),
      multiple_(required_multiple) {}

EncoderBlock::EncoderBlock(nn::ParameterStore& store, const std::string& name,
                           const BlockSpec& spec, int in_channels)
    : spec_(spec), out_channels_(spec.kind == BlockKind::max_pool ? in_channels : spec.out_channels) {
    const int out = out_channels_;
    const int s = spec.stride;
    const int d = spec.dilation;
    switch (spec.kind) {
        case BlockKind::max_pool: break;
        case BlockKind::conv:
            a_.emplace(store, name + ".conv", in_channels, out, spec.kernel, s, d, spec.activation);
            break;
        case BlockKind::basic:
            a_.emplace(store, name + ".conv1", in_channels, out, 3, s, d, Activation::relu);
            b_.emplace(store, name + ".conv2", out, out, 3, 1, d, Activation::identity);
            residual_ = true;
            break;
        case BlockKind::bottleneck: {
            const int w = out / 4;
            a_.emplace(store, name + ".conv1", in_channels, w, 1, s, 1, Activation::relu);
            b_.emplace(store, name + ".conv2", w, w, 3, 1, d, Activation::relu);
            c_.emplace(store, name + ".conv3", w, out, 1, 1, 1, Activation::identity);
            residual_ = true;
            break;
        }
        case BlockKind::inverted_residual: {
            const int hidden = spec.expand_channels;
            if (hidden != in_channels) {
                a_.emplace(store, name + ".expand", in_channels, hidden, 1, 1, 1, spec.activation);
            }
            b_.emplace(store, name + ".depthwise", hidden, hidden, spec.kernel, s, d,
                       spec.activation, hidden);
            if (spec.squeeze_excite) {
                const bool silu = spec.activation == Activation::silu;
                const int squeeze = std::max(1, (silu ? in_channels : hidden) / 4);
                se_inner_ = silu ? Activation::silu : Activation::relu;
                se_gate_ = silu ? Activation::sigmoid : Activation::hardsigmoid;
                se_reduce_.emplace(store, name + ".se.reduce", hidden, squeeze, 1,
                                   nn::Conv2dOptions{}, true);
                se_expand_.emplace(store, name + ".se.expand", squeeze, hidden, 1,
                                   nn::Conv2dOptions{}, true);
            }
            c_.emplace(store, name + ".project", hidden, out, 1, 1, 1, Activation::identity);
            residual_ = s == 1 && in_channels == out;
            break;
        }
    }
    if ((spec.kind == BlockKind::basic || spec.kind == BlockKind::bottleneck) &&
        (s != 1 || in_channels != out)) {
        shortcut_.emplace(store, name + ".downsample", in_channels, out, 1, s, 1,
                          Activation::identity);
    }
}

Var EncoderBlock::operator()(const Var& x, Mode mode) const {
    switch (spec_.kind) {
        case BlockKind::max_pool: {
            const int pad = spec_.padding >= 0 ? spec_.padding
                                               : (spec_.kernel % 2 == 1 ? spec_.kernel / 2 : 0);
            return nn::max_pool2d(x, spec_.kernel, spec_.stride, pad);
        }
        case BlockKind::conv: return (*a_)(x, mode);
        case BlockKind::basic:
        case BlockKind::bottleneck: {
            Var y = (*b_)((*a_)(x, mode), mode);
            if (c_) y = (*c_)(y, mode);
            const Var skip = shortcut_ ? (*shortcut_)(x, mode) : x;
            return nn::activate(nn::add(y, skip), Activation::relu);
        }
        case BlockKind::inverted_residual: {
            Var y = a_ ? (*a_)(x, mode) : x;
            y = (*b_)(y, mode);
            if (se_reduce_) {
                Var g = nn::activate((*se_reduce_)(nn::global_avg_pool(y)), se_inner_);
                g = nn::activate((*se_expand_)(g), se_gate_);
                y = nn::scale_channels(y, g);
            }
            y = (*c_)(y, mode);
            return residual_ ? nn::add(y, x) : y;
        }
    }
    return x;
}

Encoder::Encoder(nn::ParameterStore& store, const EncoderSpec& spec) {
    int ch = spec.in_channels;
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        std::vector<EncoderBlock> blocks;
        for (std::size_t b = 0; b < spec.stages[s].blocks.size(); ++b) {
            const std::string name =
                "encoder.stage" + std::to_string(s + 1) + "." + std::to_string(b);
            blocks.emplace_back(store, name, spec.stages[s].blocks[b], ch);
            ch = blocks.back().out_channels();
        }
        stages_.push_back(std::move(blocks));
        channels_.push_back(ch);
    }
}

std::vector<Var> Encoder::operator()(const Var& x, Mode mode) const {
    std::vector<Var> out;
    Var y = x;
    for (const auto& stage : stages_) {
        for (const auto& block : stage) y = block(y, mode);
        out.push_back(y);
    }
    return out;
}

UnetPlusPlusDecoder::UnetPlusPlusDecoder(nn::ParameterStore& store, const DecoderSpec& spec,
                                         const std::vector<int>& stage_channels)
    : depth_(spec.nested_depth) {
    auto channels = [&](int i, int j) {
        return j == 0 ? stage_channels[static_cast<std::size_t>(i)]
                      : spec.decoder_channels[static_cast<std::size_t>(i + 1)];
    };
    for (int j = 1; j < depth_; ++j) {
        for (int i = 0; i + j < depth_; ++i) {
            NestedNode node;
            node.level = i;
            node.column = j;
            for (int k = 0; k < j; ++k) {
                node.same_level_inputs.emplace_back(i, k);
                node.in_channels += channels(i, k);
            }
            node.upsampled_input = {i + 1, j - 1};
            node.in_channels += channels(i + 1, j - 1);
            node.out_channels = channels(i, j);
            const std::string name = "decoder.x_" + std::to_string(i) + "_" + std::to_string(j);
            blocks_.push_back({ConvBnAct(store, name + ".conv1", node.in_channels,
                                         node.out_channels, 3, 1, 1, Activation::relu),
                               ConvBnAct(store, name + ".conv2", node.out_channels,
                                         node.out_channels, 3, 1, 1, Activation::relu)});
            nodes_.push_back(std::move(node));
        }
    }
    const int top = channels(0, depth_ - 1);
    const int c0 = spec.decoder_channels.front();
    final_ = {ConvBnAct(store, "decoder.final.conv1", top, c0, 3, 1, 1, Activation::relu),
              ConvBnAct(store, "decoder.final.conv2", c0, c0, 3, 1, 1, Activation::relu)};
    head_ = nn::Conv2d(store, "decoder.head", c0, 1, 3, nn::Conv2dOptions{1, 1, 1, 1}, true);
}

Var UnetPlusPlusDecoder::operator()(const std::vector<Var>& stages, int out_h, int out_w,
                                    Mode mode) const {
    std::vector<std::vector<Var>> grid(static_cast<std::size_t>(depth_));
    for (int i = 0; i < depth_; ++i) grid[static_cast<std::size_t>(i)].push_back(stages[static_cast<std::size_t>(i)]);
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        const NestedNode& node = nodes_[n];
        auto& row = grid[static_cast<std::size_t>(node.level)];
        const nn::Shape target = row.front()->value.shape();
        std::vector<Var> inputs;
        for (const auto& [i, k] : node.same_level_inputs) {
            inputs.push_back(grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
        }
        const auto [ui, uk] = node.upsampled_input;
        inputs.push_back(nn::resize_bilinear(
            grid[static_cast<std::size_t>(ui)][static_cast<std::size_t>(uk)], target.h, target.w));
        const Block& block = blocks_[n];
        row.push_back(block.second(block.first(nn::concat_channels(inputs), mode), mode));
    }
    Var y = nn::resize_bilinear(grid.front().back(), out_h, out_w);
    y = final_.second(final_.first(y, mode), mode);
    return head_(y);
}

DeepLabV3PlusDecoder::DeepLabV3PlusDecoder(nn::ParameterStore& store, const DecoderSpec& spec,
                                           const std::vector<int>& stage_channels,
                                           int low_level_stage)
    : low_level_stage_(low_level_stage) {
    const int high = stage_channels.back();
    const int a = spec.aspp_channels;
    aspp_1x1_ = ConvBnAct(store, "decoder.aspp.conv1x1", high, a, 1, 1, 1, Activation::relu);
    for (std::size_t r = 0; r < spec.atrous_rates.size(); ++r) {
        aspp_atrous_.emplace_back(store, "decoder.aspp.atrous" + std::to_string(r), high, a, 3, 1,
                                  spec.atrous_rates[r], Activation::relu);
    }
    aspp_pool_ = nn::Conv2d(store, "decoder.aspp.pool", high, a, 1, nn::Conv2dOptions{}, true);
    const int concat = a * static_cast<int>(spec.atrous_rates.size() + 2);
    project_ = ConvBnAct(store, "decoder.aspp.project", concat, a, 1, 1, 1, Activation::relu);
    low_level_ = ConvBnAct(store, "decoder.low_level",
                           stage_channels[static_cast<std::size_t>(low_level_stage)],
                           spec.low_level_channels, 1, 1, 1, Activation::relu);
    fuse_ = ConvBnAct(store, "decoder.fuse", a + spec.low_level_channels, a, 3, 1, 1,
                      Activation::relu);
    head_ = nn::Conv2d(store, "decoder.head", a, 1, 3, nn::Conv2dOptions{1, 1, 1, 1}, true);
}

std::vector<int> DeepLabV3PlusDecoder::aspp_branch_channels() const {
    std::vector<int> out{aspp_1x1_.out_channels()};
    for (const auto& b : aspp_atrous_) out.push_back(b.out_channels());
    out.push_back(aspp_pool_.out_channels());
    return out;
}

Var DeepLabV3PlusDecoder::operator()(const std::vector<Var>& stages, int out_h, int out_w,
                                     Mode mode) const {
    const Var& high = stages.back();
    const nn::Shape hs = high->value.shape();
    std::vector<Var> branches{aspp_1x1_(high, mode)};
    for (const auto& b : aspp_atrous_) branches.push_back(b(high, mode));
    Var pooled = nn::activate(aspp_pool_(nn::global_avg_pool(high)), Activation::relu);
    branches.push_back(nn::resize_bilinear(pooled, hs.h, hs.w));
    Var y = project_(nn::concat_channels(branches), mode);

    const Var& low = stages[static_cast<std::size_t>(low_level_stage_)];
    const nn::Shape ls = low->value.shape();
    y = nn::resize_bilinear(y, ls.h, ls.w);
    const std::vector<Var> fused{y, low_level_(low, mode)};
    y = fuse_(nn::concat_channels(fused), mode);
    y = nn::resize_bilinear(y, out_h, out_w);
    return head_(y);
}

SegmentationModel::SegmentationModel(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), store_(seed) {
    validate(spec_);
    if (spec_.decoder.kind == DecoderKind::unetpp) {
        built_encoder_ = spec_.encoder;
    } else {
        built_encoder_ = dilate_to_output_stride(spec_.encoder, spec_.decoder.output_stride);
    }
    multiple_ = stage_strides(built_encoder_).back();
    encoder_ = std::make_unique<Encoder>(store_, built_encoder_);
    if (spec_.decoder.kind == DecoderKind::unetpp) {
        unetpp_ = std::make_unique<UnetPlusPlusDecoder>(store_, spec_.decoder,
                                                        encoder_->stage_channels());
    } else {
        const auto strides = stage_strides(built_encoder_);
        const auto it = std::find(strides.begin(), strides.end(), 4);
        if (it == strides.end()) {
            throw std::invalid_argument("deeplabv3plus: encoder has no stride-4 stage");
        }
        deeplab_ = std::make_unique<DeepLabV3PlusDecoder>(
            store_, spec_.decoder, encoder_->stage_channels(),
            static_cast<int>(it - strides.begin()));
    }
}

void SegmentationModel::check_input(const nn::Shape& s) const {
    if (s.c != spec_.encoder.in_channels) {
        throw std::invalid_argument("model expects " + std::to_string(spec_.encoder.in_channels) +
                                    " input channels, got " + std::to_string(s.c));
    }
    if (s.h % multiple_ != 0 || s.w % multiple_ != 0 || s.h == 0 || s.w == 0) {
        throw PaddingError(s.h, s.w, multiple_);
    }
}

Var SegmentationModel::forward(const Var& x, Mode mode) const {
    const nn::Shape s = x->value.shape();
    check_input(s);
    const auto stages = (*encoder_)(x, mode);
    const Var logits = unetpp_ ? (*unetpp_)(stages, s.h, s.w, mode)
                               : (*deeplab_)(stages, s.h, s.w, mode);
    return nn::activate(logits, Activation::sigmoid);
}

nn::Tensor SegmentationModel::predict(const nn::Tensor& batch) const {
    nn::NoGradGuard guard;
    return forward(nn::constant(batch), Mode::eval)->value;
}

std::vector<nn::Tensor> SegmentationModel::stage_activations(const nn::Tensor& image) const {
    if (image.shape().n != 1) throw std::invalid_argument("stage_activations expects one image");
    check_input(image.shape());
    nn::NoGradGuard guard;
    std::vector<nn::Tensor> out;
    for (const auto& v : (*encoder_)(nn::constant(image), Mode::eval)) out.push_back(v->value);
    return out;
}

std::unique_ptr<SegmentationModel> build_model(const ModelSpec& spec, std::uint64_t seed) {
    return std::make_unique<SegmentationModel>(spec, seed);
}

std::unique_ptr<SegmentationModel> build_model(const EncoderSpec& encoder,
                                               const DecoderSpec& decoder, std::uint64_t seed) {
    return build_model(ModelSpec{encoder, decoder}, seed);
}

nn::Tensor channel_mean(const nn::Tensor& map) {
    const nn::Shape s = map.shape();
    nn::Tensor out(nn::Shape{s.n, 1, s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
        float* o = out.plane(n, 0);
        for (std::size_t i = 0; i < s.plane(); ++i) {
            double acc = 0.0;
            for (int c = 0; c < s.c; ++c) acc += map.plane(n, c)[i];
            o[i] = static_cast<float>(acc / s.c);
        }
    }
    return out;
}

}  // namespace bseg::models
