// SPDX-License-Identifier: Apache-2.0
#include "bseg/nn/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace bseg::nn {

std::string to_string(const Shape& s) {
    return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
           std::to_string(s.w);
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.numel()) {
        throw std::invalid_argument("tensor of shape " + to_string(shape_) + " needs " +
                                    std::to_string(shape_.numel()) + " values, got " +
                                    std::to_string(data_.size()));
    }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape shape) {
    if (shape.numel() != data_.size()) {
        throw std::invalid_argument("cannot reshape " + to_string(shape_) + " to " +
                                    to_string(shape));
    }
    shape_ = shape;
}

Tensor Tensor::slice_batch(int n) const {
    if (n < 0 || n >= shape_.n) throw std::out_of_range("batch index out of range");
    Shape s = shape_;
    s.n = 1;
    const std::size_t len = s.numel();
    const auto first = data_.begin() + static_cast<std::ptrdiff_t>(len * n);
    return Tensor(s, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(len)));
}

Tensor stack_batch(std::span<const Tensor> items) {
    if (items.empty()) throw std::invalid_argument("stack_batch: empty input");
    Shape s = items.front().shape();
    if (s.n != 1) throw std::invalid_argument("stack_batch expects 1xCxHxW items");
    std::vector<float> values;
    values.reserve(s.numel() * items.size());
    for (const auto& t : items) {
        if (t.shape() != s) {
            throw std::invalid_argument("stack_batch: shape mismatch " + to_string(t.shape()) +
                                        " vs " + to_string(s));
        }
        values.insert(values.end(), t.values().begin(), t.values().end());
    }
    s.n = static_cast<int>(items.size());
    return Tensor(s, std::move(values));
}

}  // namespace bseg::nn
