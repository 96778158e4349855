// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "bseg/nn/autograd.hpp"

namespace bseg::losses {

enum class LossKind { dice, weighted_dice, tversky, focal_tversky };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct LossConfig {
    LossKind kind = LossKind::weighted_dice;
    double alpha = 0.4;  // false-positive weight
    double beta = 0.6;   // false-negative weight
    double gamma = 4.0 / 3.0;
    double epsilon = 1.0;
    double weight_background = 0.3;
    double weight_building = 0.7;
    bool per_image = false;  // mean of per-image losses instead of batch-summed terms
};

/// Throws std::invalid_argument naming the offending field.
void validate(const LossConfig& config);

double dice_loss(std::span<const double> p, std::span<const double> g, double epsilon);
double weighted_dice_loss(std::span<const double> p, std::span<const double> g,
                          double weight_background, double weight_building, double epsilon);
/// (A + eps) / (A + alpha B + beta C + eps) with A = sum pg, B = sum p(1-g), C = sum (1-p)g.
/// No constraint on alpha + beta.
double tversky_index(std::span<const double> p, std::span<const double> g, double alpha,
                     double beta, double epsilon);
double tversky_loss(std::span<const double> p, std::span<const double> g, double alpha,
                    double beta, double epsilon);
double focal_tversky_loss(std::span<const double> p, std::span<const double> g, double alpha,
                          double beta, double gamma, double epsilon);

struct LossValue {
    double value = 0.0;
    std::vector<double> grad;  // dL/dp
};

/// Loss and analytic gradient. `images` splits p/g into equal chunks for the
/// per-image reduction; ignored otherwise.
LossValue evaluate(const LossConfig& config, std::span<const double> p, std::span<const double> g,
                   int images = 1);

/// Max over elements of |analytic - numeric| / max(1, |numeric|), central differences.
double check_gradients(const LossConfig& config, std::span<const double> p,
                       std::span<const double> g, double step = 1e-5);

/// Zeroes gradient components that push p outside [0, 1] from the boundary.
std::vector<double> projected_gradient(std::span<const double> grad, std::span<const double> p);

/// Graph node: scalar loss of an N x 1 x H x W probability map against a binary target.
/// `exact_value` receives the double-precision loss when non-null.
nn::Var loss_node(const nn::Var& probs, const nn::Tensor& target, const LossConfig& config,
                  double* exact_value = nullptr);

}  // namespace bseg::losses
