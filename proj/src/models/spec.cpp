// SPDX-License-Identifier: Apache-2.0
#include "bseg/models/spec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

namespace bseg::models {

using nlohmann::json;

void validate(const LayerConfig& layer) {
    if (layer.kernel < 1 || layer.stride < 1 || layer.dilation < 1 || layer.padding < 0) {
        throw std::invalid_argument("invalid layer: kernel=" + std::to_string(layer.kernel) +
                                    " stride=" + std::to_string(layer.stride) +
                                    " dilation=" + std::to_string(layer.dilation) +
                                    " padding=" + std::to_string(layer.padding));
    }
}

int scale_width(int channels, double width_multiplier) {
    return std::max(4, static_cast<int>(std::lround(channels * width_multiplier)));
}

namespace {

BlockSpec conv_block(int out, int kernel, int stride, nn::Activation act) {
    BlockSpec b;
    b.kind = BlockKind::conv;
    b.out_channels = out;
    b.kernel = kernel;
    b.stride = stride;
    b.activation = act;
    return b;
}

BlockSpec pool_block(int kernel, int stride, int padding) {
    BlockSpec b;
    b.kind = BlockKind::max_pool;
    b.kernel = kernel;
    b.stride = stride;
    b.padding = padding;
    return b;
}

BlockSpec inverted_block(int out, int expand, int kernel, int stride, bool se, nn::Activation act) {
    BlockSpec b;
    b.kind = BlockKind::inverted_residual;
    b.out_channels = out;
    b.expand_channels = expand;
    b.kernel = kernel;
    b.stride = stride;
    b.squeeze_excite = se;
    b.activation = act;
    return b;
}

int make_divisible(double v, int divisor = 8) {
    int r = std::max(divisor, static_cast<int>(v + divisor / 2.0) / divisor * divisor);
    if (r < 0.9 * v) r += divisor;
    return r;
}

int pool_padding(const BlockSpec& b) {
    if (b.padding >= 0) return b.padding;
    return b.kernel % 2 == 1 ? b.kernel / 2 : 0;
}

}  // namespace

EncoderSpec vgg_encoder(int depth, double width_multiplier) {
    std::array<int, 5> convs{};
    switch (depth) {
        case 11: convs = {1, 1, 2, 2, 2}; break;
        case 13: convs = {2, 2, 2, 2, 2}; break;
        case 16: convs = {2, 2, 3, 3, 3}; break;
        case 19: convs = {2, 2, 4, 4, 4}; break;
        default: throw std::invalid_argument("unsupported VGG depth " + std::to_string(depth));
    }
    constexpr std::array<int, 5> widths{64, 128, 256, 512, 512};
    EncoderSpec spec;
    spec.family = EncoderFamily::vgg;
    spec.variant = std::to_string(depth);
    spec.width_multiplier = width_multiplier;
    for (std::size_t s = 0; s < widths.size(); ++s) {
        StageSpec stage;
        for (int i = 0; i < convs[s]; ++i) {
            stage.blocks.push_back(
                conv_block(scale_width(widths[s], width_multiplier), 3, 1, nn::Activation::relu));
        }
        stage.blocks.push_back(pool_block(2, 2, 0));
        spec.stages.push_back(std::move(stage));
    }
    return spec;
}

EncoderSpec resnet_encoder(int depth, double width_multiplier) {
    std::array<int, 4> repeats{};
    bool bottleneck = false;
    switch (depth) {
        case 18: repeats = {2, 2, 2, 2}; break;
        case 34: repeats = {3, 4, 6, 3}; break;
        case 50: repeats = {3, 4, 6, 3}; bottleneck = true; break;
        case 101: repeats = {3, 4, 23, 3}; bottleneck = true; break;
        case 152: repeats = {3, 8, 36, 3}; bottleneck = true; break;
        default: throw std::invalid_argument("unsupported ResNet depth " + std::to_string(depth));
    }
    constexpr std::array<int, 4> widths{64, 128, 256, 512};
    EncoderSpec spec;
    spec.family = EncoderFamily::resnet;
    spec.variant = std::to_string(depth);
    spec.width_multiplier = width_multiplier;
    spec.stages.push_back(
        {{conv_block(scale_width(64, width_multiplier), 7, 2, nn::Activation::relu)}});
    for (std::size_t layer = 0; layer < widths.size(); ++layer) {
        StageSpec stage;
        if (layer == 0) stage.blocks.push_back(pool_block(3, 2, 1));
        const int w = scale_width(widths[layer], width_multiplier);
        for (int i = 0; i < repeats[layer]; ++i) {
            BlockSpec b;
            b.kind = bottleneck ? BlockKind::bottleneck : BlockKind::basic;
            b.out_channels = bottleneck ? 4 * w : w;
            b.kernel = 3;
            b.stride = (layer > 0 && i == 0) ? 2 : 1;
            stage.blocks.push_back(b);
        }
        spec.stages.push_back(std::move(stage));
    }
    return spec;
}

EncoderSpec efficientnet_encoder(int compound_index, double width_multiplier) {
    struct Coef {
        double width;
        double depth;
    };
    constexpr std::array<Coef, 8> coefs{{{1.0, 1.0}, {1.0, 1.1}, {1.1, 1.2}, {1.2, 1.4},
                                         {1.4, 1.8}, {1.6, 2.2}, {1.8, 2.6}, {2.0, 3.1}}};
    if (compound_index < 0 || compound_index >= static_cast<int>(coefs.size())) {
        throw std::invalid_argument("unsupported EfficientNet index B" +
                                    std::to_string(compound_index));
    }
    const Coef c = coefs[static_cast<std::size_t>(compound_index)];
    struct Row {
        int expand, kernel, stride, channels, repeats, stage;
    };
    // Base (B0) MBConv table; `stage` is the output feature stage the row belongs to.
    constexpr std::array<Row, 7> table{{{1, 3, 1, 16, 1, 0},
                                        {6, 3, 2, 24, 2, 1},
                                        {6, 5, 2, 40, 2, 2},
                                        {6, 3, 2, 80, 3, 3},
                                        {6, 5, 1, 112, 3, 3},
                                        {6, 5, 2, 192, 4, 4},
                                        {6, 3, 1, 320, 1, 4}}};
    auto width = [&](int ch) { return scale_width(make_divisible(ch * c.width), width_multiplier); };
    EncoderSpec spec;
    spec.family = EncoderFamily::efficientnet;
    spec.variant = "b" + std::to_string(compound_index);
    spec.width_multiplier = width_multiplier;
    spec.stages.resize(5);
    int in = width(32);
    spec.stages[0].blocks.push_back(conv_block(in, 3, 2, nn::Activation::silu));
    for (const Row& row : table) {
        const int out = width(row.channels);
        const int repeats = static_cast<int>(std::ceil(row.repeats * c.depth));
        for (int i = 0; i < repeats; ++i) {
            spec.stages[static_cast<std::size_t>(row.stage)].blocks.push_back(inverted_block(
                out, in * row.expand, row.kernel, i == 0 ? row.stride : 1, true,
                nn::Activation::silu));
            in = out;
        }
    }
    return spec;
}

EncoderSpec mobilenet_encoder(int version, double width_multiplier) {
    EncoderSpec spec;
    spec.family = EncoderFamily::mobilenet;
    spec.variant = "v" + std::to_string(version);
    spec.width_multiplier = width_multiplier;
    spec.stages.resize(5);
    auto width = [&](int ch) { return scale_width(ch, width_multiplier); };
    if (version == 2) {
        struct Row {
            int expand, channels, repeats, stride, stage;
        };
        constexpr std::array<Row, 7> table{{{1, 16, 1, 1, 0},
                                            {6, 24, 2, 2, 1},
                                            {6, 32, 3, 2, 2},
                                            {6, 64, 4, 2, 3},
                                            {6, 96, 3, 1, 3},
                                            {6, 160, 3, 2, 4},
                                            {6, 320, 1, 1, 4}}};
        int in = width(32);
        spec.stages[0].blocks.push_back(conv_block(in, 3, 2, nn::Activation::relu6));
        for (const Row& row : table) {
            const int out = width(row.channels);
            for (int i = 0; i < row.repeats; ++i) {
                spec.stages[static_cast<std::size_t>(row.stage)].blocks.push_back(
                    inverted_block(out, in * row.expand, 3, i == 0 ? row.stride : 1, false,
                                   nn::Activation::relu6));
                in = out;
            }
        }
        return spec;
    }
    if (version == 3) {
        struct Row {
            int kernel, expand, channels;
            bool se;
            bool hardswish;
            int stride, stage;
        };
        // Large variant: kernel, expanded width, output width, SE, activation, stride.
        constexpr std::array<Row, 15> table{{{3, 16, 16, false, false, 1, 0},
                                             {3, 64, 24, false, false, 2, 1},
                                             {3, 72, 24, false, false, 1, 1},
                                             {5, 72, 40, true, false, 2, 2},
                                             {5, 120, 40, true, false, 1, 2},
                                             {5, 120, 40, true, false, 1, 2},
                                             {3, 240, 80, false, true, 2, 3},
                                             {3, 200, 80, false, true, 1, 3},
                                             {3, 184, 80, false, true, 1, 3},
                                             {3, 184, 80, false, true, 1, 3},
                                             {3, 480, 112, true, true, 1, 3},
                                             {3, 672, 112, true, true, 1, 3},
                                             {5, 672, 160, true, true, 2, 4},
                                             {5, 960, 160, true, true, 1, 4},
                                             {5, 960, 160, true, true, 1, 4}}};
        spec.stages[0].blocks.push_back(conv_block(width(16), 3, 2, nn::Activation::hardswish));
        for (const Row& row : table) {
            spec.stages[static_cast<std::size_t>(row.stage)].blocks.push_back(inverted_block(
                width(row.channels), width(row.expand), row.kernel, row.stride, row.se,
                row.hardswish ? nn::Activation::hardswish : nn::Activation::relu));
        }
        return spec;
    }
    throw std::invalid_argument("unsupported MobileNet version v" + std::to_string(version));
}

std::vector<std::string> known_encoder_names() {
    return {"vgg11",           "vgg13",           "vgg16",           "vgg19",
            "resnet18",        "resnet34",        "resnet50",        "resnet101",
            "resnet152",       "efficientnet-b0", "efficientnet-b1", "efficientnet-b2",
            "efficientnet-b3", "efficientnet-b4", "efficientnet-b5", "efficientnet-b6",
            "efficientnet-b7", "mobilenet-v2",    "mobilenet-v3"};
}

EncoderSpec encoder_by_name(const std::string& name, double width_multiplier) {
    const auto names = known_encoder_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::string known;
        for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown encoder '" + name + "' (known: " + known + ")");
    }
    auto suffix_int = [&](std::size_t prefix) { return std::stoi(name.substr(prefix)); };
    if (name.rfind("vgg", 0) == 0) return vgg_encoder(suffix_int(3), width_multiplier);
    if (name.rfind("resnet", 0) == 0) return resnet_encoder(suffix_int(6), width_multiplier);
    if (name.rfind("efficientnet-b", 0) == 0) return efficientnet_encoder(suffix_int(14), width_multiplier);
    return mobilenet_encoder(suffix_int(11), width_multiplier);
}

DecoderSpec default_decoder(DecoderKind kind, const EncoderSpec& encoder) {
    DecoderSpec d;
    d.kind = kind;
    const double wm = encoder.width_multiplier;
    auto width = [&](int ch) { return std::max(16, static_cast<int>(std::lround(ch * wm))); };
    d.nested_depth = static_cast<int>(encoder.stages.size());
    for (int i = 0; i < d.nested_depth; ++i) d.decoder_channels.push_back(width(16 << i));
    d.aspp_channels = width(256);
    d.low_level_channels = width(48);
    return d;
}

std::vector<int> stage_channels(const EncoderSpec& spec) {
    std::vector<int> out;
    int ch = spec.in_channels;
    for (const auto& stage : spec.stages) {
        for (const auto& b : stage.blocks) {
            if (b.kind != BlockKind::max_pool) ch = b.out_channels;
        }
        out.push_back(ch);
    }
    return out;
}

std::vector<int> stage_strides(const EncoderSpec& spec) {
    std::vector<int> out;
    int stride = 1;
    for (const auto& stage : spec.stages) {
        for (const auto& b : stage.blocks) stride *= b.stride;
        out.push_back(stride);
    }
    return out;
}

void validate(const EncoderSpec& spec) {
    if (spec.in_channels < 1) throw std::invalid_argument("encoder: in_channels must be >= 1");
    if (!(spec.width_multiplier > 0.0)) {
        throw std::invalid_argument("encoder: width_multiplier must be > 0");
    }
    if (spec.stages.size() < 4) {
        throw std::invalid_argument("encoder: needs at least 4 feature stages, got " +
                                    std::to_string(spec.stages.size()));
    }
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        const auto& stage = spec.stages[s];
        if (stage.blocks.empty()) {
            throw std::invalid_argument("encoder: stage " + std::to_string(s + 1) + " is empty");
        }
        for (const auto& b : stage.blocks) {
            const std::string where = "encoder stage " + std::to_string(s + 1) + " " + to_string(b.kind);
            if (b.kernel < 1 || b.dilation < 1 || (b.stride != 1 && b.stride != 2)) {
                throw std::invalid_argument(where + ": kernel/dilation must be >= 1, stride 1 or 2");
            }
            if (b.kind != BlockKind::max_pool && b.out_channels < 1) {
                throw std::invalid_argument(where + ": out_channels must be >= 1");
            }
            if (b.kind == BlockKind::bottleneck && b.out_channels % 4 != 0) {
                throw std::invalid_argument(where + ": bottleneck out_channels must be divisible by 4");
            }
            if (b.kind == BlockKind::inverted_residual && b.expand_channels < 1) {
                throw std::invalid_argument(where + ": expand_channels must be >= 1");
            }
        }
    }
    const auto strides = stage_strides(spec);
    for (std::size_t s = 0; s < strides.size(); ++s) {
        const int expected = 2 << s;
        if (strides[s] != expected) {
            throw std::invalid_argument("encoder: stage " + std::to_string(s + 1) + " ends at stride " +
                                        std::to_string(strides[s]) + ", expected " +
                                        std::to_string(expected));
        }
    }
}

void validate(const DecoderSpec& spec) {
    if (spec.kind == DecoderKind::unetpp) {
        if (spec.nested_depth < 2) throw std::invalid_argument("unetpp: nested_depth must be >= 2");
        if (static_cast<int>(spec.decoder_channels.size()) != spec.nested_depth) {
            throw std::invalid_argument("unetpp: decoder_channels needs " +
                                        std::to_string(spec.nested_depth) + " entries, got " +
                                        std::to_string(spec.decoder_channels.size()));
        }
        for (int c : spec.decoder_channels) {
            if (c < 1) throw std::invalid_argument("unetpp: decoder channels must be >= 1");
        }
        return;
    }
    if (spec.atrous_rates.empty()) throw std::invalid_argument("deeplabv3plus: no atrous rates");
    std::set<int> seen;
    for (int r : spec.atrous_rates) {
        if (r < 1) throw std::invalid_argument("deeplabv3plus: atrous rates must be positive");
        if (!seen.insert(r).second) {
            throw std::invalid_argument("deeplabv3plus: atrous rate " + std::to_string(r) +
                                        " repeated");
        }
    }
    if (spec.aspp_channels < 1 || spec.low_level_channels < 1) {
        throw std::invalid_argument("deeplabv3plus: channel counts must be >= 1");
    }
    if (spec.output_stride != 8 && spec.output_stride != 16 && spec.output_stride != 32) {
        throw std::invalid_argument("deeplabv3plus: output_stride must be 8, 16 or 32");
    }
}

void validate(const ModelSpec& spec) {
    validate(spec.encoder);
    validate(spec.decoder);
    const int stages = static_cast<int>(spec.encoder.stages.size());
    if (spec.decoder.kind == DecoderKind::unetpp && spec.decoder.nested_depth != stages) {
        throw std::invalid_argument("incompatible specs: unetpp nested_depth " +
                                    std::to_string(spec.decoder.nested_depth) +
                                    " does not match encoder stage count " + std::to_string(stages));
    }
    if (spec.decoder.kind == DecoderKind::deeplabv3plus &&
        spec.decoder.output_stride > stage_strides(spec.encoder).back()) {
        throw std::invalid_argument("incompatible specs: output_stride exceeds encoder stride");
    }
}

EncoderSpec dilate_to_output_stride(const EncoderSpec& spec, int output_stride) {
    EncoderSpec out = spec;
    int stride = 1;
    int dilation = 1;
    for (auto& stage : out.stages) {
        std::vector<BlockSpec> kept;
        for (BlockSpec b : stage.blocks) {
            if (b.stride == 2 && stride * 2 > output_stride) {
                if (b.kind == BlockKind::max_pool) {
                    dilation *= 2;
                    continue;
                }
                b.stride = 1;
                b.dilation = dilation;
                dilation *= 2;
            } else {
                stride *= b.stride;
                if (b.kind != BlockKind::max_pool && b.kernel > 1) b.dilation = dilation;
            }
            kept.push_back(b);
        }
        stage.blocks = std::move(kept);
    }
    return out;
}

std::vector<LayerConfig> block_layers(const BlockSpec& b, int in_channels) {
    switch (b.kind) {
        case BlockKind::conv:
            return {{b.kernel, b.stride, b.dilation, b.dilation * (b.kernel - 1) / 2}};
        case BlockKind::max_pool: return {{b.kernel, b.stride, 1, pool_padding(b)}};
        case BlockKind::basic:
            return {{3, b.stride, b.dilation, b.dilation}, {3, 1, b.dilation, b.dilation}};
        case BlockKind::bottleneck:
            return {{1, b.stride, 1, 0}, {3, 1, b.dilation, b.dilation}, {1, 1, 1, 0}};
        case BlockKind::inverted_residual: {
            std::vector<LayerConfig> out;
            if (b.expand_channels != in_channels) out.push_back({1, 1, 1, 0});
            out.push_back({b.kernel, b.stride, b.dilation, b.dilation * (b.kernel - 1) / 2});
            out.push_back({1, 1, 1, 0});
            return out;
        }
    }
    return {};
}

std::vector<LayerConfig> block_layers(const BlockSpec& block) {
    return block_layers(block, block.expand_channels + 1);
}

std::vector<LayerConfig> encoder_layers(const EncoderSpec& spec) {
    std::vector<LayerConfig> out;
    int ch = spec.in_channels;
    for (const auto& stage : spec.stages) {
        for (const auto& b : stage.blocks) {
            auto layers = block_layers(b, ch);
            out.insert(out.end(), layers.begin(), layers.end());
            if (b.kind != BlockKind::max_pool) ch = b.out_channels;
        }
    }
    return out;
}

int receptive_field(const std::vector<LayerConfig>& layers) {
    if (layers.empty()) throw std::invalid_argument("receptive_field: empty layer list");
    long long r = 1;
    long long j = 1;
    for (const auto& l : layers) {
        validate(l);
        const long long k_eff = l.kernel + static_cast<long long>(l.kernel - 1) * (l.dilation - 1);
        r += (k_eff - 1) * j;
        j *= l.stride;
    }
    return static_cast<int>(r);
}

std::vector<StageReceptiveField> receptive_field_table(const EncoderSpec& spec) {
    std::vector<StageReceptiveField> table;
    std::vector<LayerConfig> layers;
    int ch = spec.in_channels;
    int stride = 1;
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        for (const auto& b : spec.stages[s].blocks) {
            auto bl = block_layers(b, ch);
            layers.insert(layers.end(), bl.begin(), bl.end());
            if (b.kind != BlockKind::max_pool) ch = b.out_channels;
            stride *= b.stride;
        }
        table.push_back({static_cast<int>(s + 1), stride, ch, static_cast<int>(layers.size()),
                         receptive_field(layers)});
    }
    return table;
}

std::string to_string(EncoderFamily f) {
    switch (f) {
        case EncoderFamily::vgg: return "vgg";
        case EncoderFamily::resnet: return "resnet";
        case EncoderFamily::efficientnet: return "efficientnet";
        case EncoderFamily::mobilenet: return "mobilenet";
    }
    return "vgg";
}

std::string to_string(BlockKind k) {
    switch (k) {
        case BlockKind::conv: return "conv";
        case BlockKind::max_pool: return "max_pool";
        case BlockKind::basic: return "basic";
        case BlockKind::bottleneck: return "bottleneck";
        case BlockKind::inverted_residual: return "inverted_residual";
    }
    return "conv";
}

std::string to_string(DecoderKind k) {
    return k == DecoderKind::unetpp ? "unetpp" : "deeplabv3plus";
}

namespace {

EncoderFamily family_from_string(const std::string& s) {
    for (auto f : {EncoderFamily::vgg, EncoderFamily::resnet, EncoderFamily::efficientnet,
                   EncoderFamily::mobilenet}) {
        if (to_string(f) == s) return f;
    }
    throw std::invalid_argument("unknown encoder family '" + s + "'");
}

BlockKind block_kind_from_string(const std::string& s) {
    for (auto k : {BlockKind::conv, BlockKind::max_pool, BlockKind::basic, BlockKind::bottleneck,
                   BlockKind::inverted_residual}) {
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument("unknown block kind '" + s + "'");
}

DecoderKind decoder_kind_from_string(const std::string& s) {
    if (s == "unetpp") return DecoderKind::unetpp;
    if (s == "deeplabv3plus") return DecoderKind::deeplabv3plus;
    throw std::invalid_argument("unknown decoder kind '" + s + "' (expected unetpp or deeplabv3plus)");
}

json block_to_json(const BlockSpec& b) {
    json j{{"kind", to_string(b.kind)}, {"kernel", b.kernel}, {"stride", b.stride}};
    if (b.kind == BlockKind::max_pool) {
        j["padding"] = b.padding;
        return j;
    }
    j["out_channels"] = b.out_channels;
    j["dilation"] = b.dilation;
    j["activation"] = std::string(nn::to_string(b.activation));
    if (b.kind == BlockKind::inverted_residual) {
        j["expand_channels"] = b.expand_channels;
        j["squeeze_excite"] = b.squeeze_excite;
    }
    return j;
}

BlockSpec block_from_json(const json& j) {
    BlockSpec b;
    b.kind = block_kind_from_string(j.at("kind").get<std::string>());
    b.kernel = j.value("kernel", 3);
    b.stride = j.value("stride", 1);
    b.dilation = j.value("dilation", 1);
    b.padding = j.value("padding", -1);
    b.out_channels = j.value("out_channels", 0);
    b.expand_channels = j.value("expand_channels", 0);
    b.squeeze_excite = j.value("squeeze_excite", false);
    b.activation = nn::activation_from_string(j.value("activation", std::string("relu")));
    return b;
}

}  // namespace

json to_json(const EncoderSpec& spec) {
    json stages = json::array();
    for (const auto& s : spec.stages) {
        json blocks = json::array();
        for (const auto& b : s.blocks) blocks.push_back(block_to_json(b));
        stages.push_back(json{{"blocks", blocks}});
    }
    return json{{"family", to_string(spec.family)},
                {"variant", spec.variant},
                {"width_multiplier", spec.width_multiplier},
                {"in_channels", spec.in_channels},
                {"stages", stages}};
}

json to_json(const DecoderSpec& spec) {
    json j{{"kind", to_string(spec.kind)}};
    if (spec.kind == DecoderKind::unetpp) {
        j["nested_depth"] = spec.nested_depth;
        j["decoder_channels"] = spec.decoder_channels;
    } else {
        j["atrous_rates"] = spec.atrous_rates;
        j["aspp_channels"] = spec.aspp_channels;
        j["low_level_channels"] = spec.low_level_channels;
        j["output_stride"] = spec.output_stride;
    }
    return j;
}

json to_json(const ModelSpec& spec) {
    return json{{"encoder", to_json(spec.encoder)}, {"decoder", to_json(spec.decoder)}};
}

EncoderSpec encoder_from_json(const json& j) {
    if (j.is_string()) return encoder_by_name(j.get<std::string>());
    const double wm = j.value("width_multiplier", 1.0);
    if (!j.contains("stages")) {
        if (!j.contains("name")) {
            throw std::invalid_argument("encoder: needs either 'name' or explicit 'stages'");
        }
        return encoder_by_name(j.at("name").get<std::string>(), wm);
    }
    EncoderSpec spec;
    spec.family = family_from_string(j.value("family", std::string("vgg")));
    spec.variant = j.value("variant", std::string());
    spec.width_multiplier = wm;
    spec.in_channels = j.value("in_channels", 3);
    for (const auto& s : j.at("stages")) {
        StageSpec stage;
        for (const auto& b : s.at("blocks")) stage.blocks.push_back(block_from_json(b));
        spec.stages.push_back(std::move(stage));
    }
    return spec;
}

DecoderSpec decoder_from_json(const json& j, const EncoderSpec& encoder) {
    const DecoderKind kind = decoder_kind_from_string(j.value("kind", std::string("unetpp")));
    DecoderSpec d = default_decoder(kind, encoder);
    if (j.contains("nested_depth")) d.nested_depth = j.at("nested_depth").get<int>();
    if (j.contains("decoder_channels")) {
        d.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
    }
    if (j.contains("atrous_rates")) d.atrous_rates = j.at("atrous_rates").get<std::vector<int>>();
    if (j.contains("aspp_channels")) d.aspp_channels = j.at("aspp_channels").get<int>();
    if (j.contains("low_level_channels")) d.low_level_channels = j.at("low_level_channels").get<int>();
    if (j.contains("output_stride")) d.output_stride = j.at("output_stride").get<int>();
    return d;
}

ModelSpec model_spec_from_json(const json& j) {
    ModelSpec spec;
    spec.encoder = encoder_from_json(j.at("encoder"));
    spec.decoder = decoder_from_json(j.value("decoder", json::object()), spec.encoder);
    return spec;
}

bool operator==(const BlockSpec& a, const BlockSpec& b) {
    return a.kind == b.kind && a.out_channels == b.out_channels && a.kernel == b.kernel &&
           a.stride == b.stride && a.dilation == b.dilation && a.padding == b.padding &&
           a.expand_channels == b.expand_channels && a.squeeze_excite == b.squeeze_excite &&
           a.activation == b.activation;
}

bool operator==(const EncoderSpec& a, const EncoderSpec& b) {
    if (a.family != b.family || a.variant != b.variant || a.width_multiplier != b.width_multiplier ||
        a.in_channels != b.in_channels || a.stages.size() != b.stages.size()) {
        return false;
    }
    for (std::size_t s = 0; s < a.stages.size(); ++s) {
        if (a.stages[s].blocks != b.stages[s].blocks) return false;
    }
    return true;
}

bool operator==(const DecoderSpec& a, const DecoderSpec& b) {
    return a.kind == b.kind && a.nested_depth == b.nested_depth &&
           a.decoder_channels == b.decoder_channels && a.atrous_rates == b.atrous_rates &&
           a.aspp_channels == b.aspp_channels && a.low_level_channels == b.low_level_channels &&
           a.output_stride == b.output_stride;
}

}  // namespace bseg::models
