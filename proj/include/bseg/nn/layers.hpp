// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "bseg/nn/ops.hpp"

namespace bseg::nn {

enum class Mode { train, eval };

struct NamedParameter {
    std::string name;
    Var var;
};

struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

/// Owns every trainable tensor and running statistic of a network, keyed by
/// dotted layer path. Registration order is the optimizer and checkpoint order.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;

    Var add_constant(const std::string& name, Shape shape, float fill);
    /// Variance-scaling (He normal) initialisation, std = sqrt(2 / fan_in).
    Var add_variance_scaling(const std::string& name, Shape shape, int fan_in);
    BatchNormState& add_batch_norm_state(const std::string& name, int channels);

    [[nodiscard]] const std::vector<NamedParameter>& parameters() const { return params_; }
    [[nodiscard]] std::vector<NamedBuffer> buffers();
    [[nodiscard]] std::size_t parameter_count() const;
    void zero_grad();

private:
    void claim(const std::string& name);

    std::mt19937_64 rng_;
    std::vector<NamedParameter> params_;
    std::deque<std::pair<std::string, BatchNormState>> bn_states_;
    std::vector<std::string> names_;
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
           int kernel, Conv2dOptions opt, bool with_bias);

    Var operator()(const Var& x) const { return conv2d(x, weight_, bias_, opt_); }

    [[nodiscard]] int in_channels() const { return in_channels_; }
    [[nodiscard]] int out_channels() const { return out_channels_; }
    [[nodiscard]] const Var& weight() const { return weight_; }

private:
    Var weight_;
    Var bias_;
    Conv2dOptions opt_{};
    int in_channels_ = 0;
    int out_channels_ = 0;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(ParameterStore& store, const std::string& name, int channels);

    Var operator()(const Var& x, Mode mode) const {
        return batch_norm(x, gamma_, beta_, *state_, mode == Mode::train);
    }

private:
    Var gamma_;
    Var beta_;
    BatchNormState* state_ = nullptr;
};

/// conv (no bias) -> batch norm -> activation.
class ConvBnAct {
public:
    ConvBnAct() = default;
    ConvBnAct(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
              int kernel, int stride, int dilation, Activation act, int groups = 1);

    Var operator()(const Var& x, Mode mode) const { return activate(bn_(conv_(x), mode), act_); }

    [[nodiscard]] const Conv2d& conv() const { return conv_; }
    [[nodiscard]] int out_channels() const { return conv_.out_channels(); }

private:
    Conv2d conv_;
    BatchNorm2d bn_;
    Activation act_ = Activation::relu;
};

}  // namespace bseg::nn
