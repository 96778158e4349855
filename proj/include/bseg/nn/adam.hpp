// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "bseg/nn/layers.hpp"

namespace bseg::nn {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // L2 added to the gradient; off unless configured
};

/// Adaptive-moment optimizer with bias correction.
class Adam {
public:
    Adam(const std::vector<NamedParameter>& params, AdamOptions opt);

    /// Applies one update from the accumulated gradients (missing gradients count as zero).
    void step();
    void set_learning_rate(double lr) { opt_.learning_rate = lr; }

    [[nodiscard]] const AdamOptions& options() const { return opt_; }
    [[nodiscard]] std::int64_t steps() const { return steps_; }

    // Exposed for resumable training state.
    [[nodiscard]] std::vector<Tensor>& first_moments() { return m_; }
    [[nodiscard]] std::vector<Tensor>& second_moments() { return v_; }
    void set_steps(std::int64_t s) { steps_ = s; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamOptions opt_;
    std::int64_t steps_ = 0;
};

}  // namespace bseg::nn
