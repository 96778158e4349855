// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bseg::nn {

/// NCHW extent of a dense float tensor.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    [[nodiscard]] std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense row-major NCHW float buffer with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t numel() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] float* data() { return data_.data(); }
    [[nodiscard]] const float* data() const { return data_.data(); }
    [[nodiscard]] std::span<float> values() { return data_; }
    [[nodiscard]] std::span<const float> values() const { return data_; }

    [[nodiscard]] float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    [[nodiscard]] float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    /// Pointer to the start of plane (n, c).
    [[nodiscard]] float* plane(int n, int c) { return data_.data() + plane_offset(n, c); }
    [[nodiscard]] const float* plane(int n, int c) const { return data_.data() + plane_offset(n, c); }

    void fill(float v);
    /// Reinterprets the buffer under a new shape with the same element count.
    void reshape(Shape shape);

    /// Copies image `n` out as a 1xCxHxW tensor.
    [[nodiscard]] Tensor slice_batch(int n) const;

private:
    [[nodiscard]] std::size_t plane_offset(int n, int c) const {
        return (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
    }
    [[nodiscard]] std::size_t offset(int n, int c, int h, int w) const {
        return plane_offset(n, c) + static_cast<std::size_t>(h) * shape_.w + w;
    }

    Shape shape_{0, 0, 0, 0};
    std::vector<float> data_;
};

/// Stacks equally shaped 1xCxHxW tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

}  // namespace bseg::nn
