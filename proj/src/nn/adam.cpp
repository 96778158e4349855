// SPDX-License-Identifier: Apache-2.0
#include "bseg/nn/adam.hpp"

#include <cmath>

namespace bseg::nn {

Adam::Adam(const std::vector<NamedParameter>& params, AdamOptions opt) : opt_(opt) {
    params_.reserve(params.size());
    for (const auto& p : params) {
        params_.push_back(p.var);
        m_.emplace_back(p.var->value.shape(), 0.0f);
        v_.emplace_back(p.var->value.shape(), 0.0f);
    }
}

void Adam::step() {
    ++steps_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
    const double lr = opt_.learning_rate;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Node& p = *params_[k];
        if (!p.has_grad()) continue;
        float* w = p.value.data();
        const float* g = p.grad.data();
        float* m = m_[k].data();
        float* v = v_[k].data();
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double gi = static_cast<double>(g[i]) + opt_.weight_decay * w[i];
            const double mi = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
            const double vi = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + opt_.epsilon);
            w[i] = static_cast<float>(w[i] - update);
        }
    }
}

}  // namespace bseg::nn
