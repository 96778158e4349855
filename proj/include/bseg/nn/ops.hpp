// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>

#include "bseg/nn/autograd.hpp"

namespace bseg::nn {

struct Conv2dOptions {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
    int groups = 1;
};

/// 2-D cross-correlation. `weight` is Cout x (Cin/groups) x k x k; `bias` may be null.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const Conv2dOptions& opt);

/// Running statistics owned by a batch-norm layer; updated only in training mode.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
    float momentum = 0.1f;
    float eps = 1e-5f;
};

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
               bool training);

enum class Activation { identity, relu, relu6, silu, hardswish, sigmoid, hardsigmoid };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

Var activate(const Var& x, Activation act);
Var max_pool2d(const Var& x, int kernel, int stride, int padding);
Var add(const Var& a, const Var& b);
/// Multiplies every plane (n, c) of `x` by the scalar s[n, c]; `s` is N x C x 1 x 1.
Var scale_channels(const Var& x, const Var& s);
Var concat_channels(std::span<const Var> xs);
/// Bilinear resampling with half-pixel centres (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var global_avg_pool(const Var& x);

/// Value-only bilinear resize used outside the graph (TTA, augmentation).
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

}  // namespace bseg::nn
