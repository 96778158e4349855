// SPDX-License-Identifier: Apache-2.0
#include "bseg/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bseg::nn {

void ParameterStore::claim(const std::string& name) {
    if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
        throw std::logic_error("duplicate parameter name '" + name + "'");
    }
    names_.push_back(name);
}

Var ParameterStore::add_constant(const std::string& name, Shape shape, float fill) {
    claim(name);
    params_.push_back({name, leaf(Tensor(shape, fill))});
    return params_.back().var;
}

Var ParameterStore::add_variance_scaling(const std::string& name, Shape shape, int fan_in) {
    claim(name);
    Tensor t(shape);
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (auto& v : t.values()) v = dist(rng_);
    params_.push_back({name, leaf(std::move(t))});
    return params_.back().var;
}

BatchNormState& ParameterStore::add_batch_norm_state(const std::string& name, int channels) {
    claim(name + ".running_mean");
    claim(name + ".running_var");
    BatchNormState state;
    state.running_mean = Tensor(Shape{1, channels, 1, 1}, 0.0f);
    state.running_var = Tensor(Shape{1, channels, 1, 1}, 1.0f);
    bn_states_.emplace_back(name, std::move(state));
    return bn_states_.back().second;
}

std::vector<NamedBuffer> ParameterStore::buffers() {
    std::vector<NamedBuffer> out;
    out.reserve(bn_states_.size() * 2);
    for (auto& [name, state] : bn_states_) {
        out.push_back({name + ".running_mean", &state.running_mean});
        out.push_back({name + ".running_var", &state.running_var});
    }
    return out;
}

std::size_t ParameterStore::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.var->value.numel();
    return total;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) {
        if (p.var->has_grad()) p.var->grad.fill(0.0f);
    }
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, Conv2dOptions opt, bool with_bias)
    : opt_(opt), in_channels_(in_channels), out_channels_(out_channels) {
    if (in_channels % opt.groups != 0 || out_channels % opt.groups != 0) {
        throw std::invalid_argument(name + ": channels not divisible by groups");
    }
    const int cin_g = in_channels / opt.groups;
    weight_ = store.add_variance_scaling(name + ".weight", Shape{out_channels, cin_g, kernel, kernel},
                                         cin_g * kernel * kernel);
    if (with_bias) bias_ = store.add_constant(name + ".bias", Shape{1, out_channels, 1, 1}, 0.0f);
}

BatchNorm2d::BatchNorm2d(ParameterStore& store, const std::string& name, int channels)
    : gamma_(store.add_constant(name + ".gamma", Shape{1, channels, 1, 1}, 1.0f)),
      beta_(store.add_constant(name + ".beta", Shape{1, channels, 1, 1}, 0.0f)),
      state_(&store.add_batch_norm_state(name, channels)) {}

ConvBnAct::ConvBnAct(ParameterStore& store, const std::string& name, int in_channels,
                     int out_channels, int kernel, int stride, int dilation, Activation act,
                     int groups)
    : conv_(store, name + ".conv", in_channels, out_channels, kernel,
            Conv2dOptions{stride, dilation * (kernel - 1) / 2, dilation, groups}, false),
      bn_(store, name + ".bn", out_channels),
      act_(act) {}

}  // namespace bseg::nn
