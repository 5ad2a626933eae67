#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace npc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float tensor. Images are channels-first (C x H x W).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    /// 1-D tensor from a list of values.
    static Tensor vector(std::initializer_list<float> values);
    /// 2-D tensor from nested rows; every row must have the same length.
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    /// Same data, new shape with the same element count.
    Tensor reshaped(Shape shape) const;
    Tensor flattened() const { return reshaped({size()}); }

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<float> data_;
};

/// Matrix product [rows x inner] * [inner x cols], accumulated in double.
Tensor matmul(const Tensor& a, const Tensor& b);

struct Conv2dGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Output spatial extent for one axis: floor((in + 2p - k) / stride) + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const Conv2dGeometry& g);

/// Zero-padded cross-correlation: input C x H x W, kernels K x C x kh x kw,
/// bias K. Accumulates in double.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const Conv2dGeometry& geometry);

Tensor relu(const Tensor& t);

struct PoolGeometry {
    std::size_t window = 2;
    std::size_t stride = 2;
};

std::size_t pool_output_extent(std::size_t in, const PoolGeometry& g);

/// Per-channel window maximum over a C x H x W tensor.
Tensor maxpool2d(const Tensor& t, const PoolGeometry& geometry);

/// As maxpool2d, also reporting for each output element the flat index of the
/// winning input element. Ties go to the lowest input index.
Tensor maxpool2d(const Tensor& t, const PoolGeometry& geometry, std::vector<std::size_t>& winners);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, float factor);

}  // namespace npc
