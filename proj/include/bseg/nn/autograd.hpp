// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bseg/nn/tensor.hpp"

namespace bseg::nn {

struct Node;
using Var = std::shared_ptr<Node>;

/// A value in the dynamic computation graph. Nodes produced while gradient
/// recording is disabled keep no inputs, so intermediates are freed as soon as
/// the last handle goes away.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn;

    /// Returns the gradient buffer, zero-initialising it on first use.
    Tensor& grad_buffer();
    [[nodiscard]] bool has_grad() const { return !grad.empty(); }
};

/// Leaf that never receives gradients.
Var constant(Tensor value);
/// Trainable leaf.
Var leaf(Tensor value);

[[nodiscard]] bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op result. Inputs and the backward closure are retained only when
/// recording is on and at least one input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from `root`, seeding its gradient with `seed`.
void backward(const Var& root, const Tensor& seed);

}  // namespace bseg::nn
