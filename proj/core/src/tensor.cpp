#include "npc/tensor.hpp"

#include "npc/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace npc {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    for (auto e : shape_) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto e : shape_) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
    }
    if (data_.size() != shape_numel(shape_)) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::vector(std::initializer_list<float> values) {
    return Tensor({values.size()}, std::vector<float>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
    if (rows.size() == 0) throw DimensionError("matrix needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<float> data;
    data.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) throw DimensionError("ragged matrix rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    }
    const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    Tensor out({rows, cols});
    std::vector<double> acc(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < inner; ++i) {
            const double av = a.at(r, i);
            if (av == 0.0) continue;
            for (std::size_t c = 0; c < cols; ++c) acc[c] += av * b.at(i, c);
        }
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = static_cast<float>(acc[c]);
    }
    return out;
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const Conv2dGeometry& g) {
    if (g.stride == 0) throw InvalidArgument("conv2d stride must be positive");
    const std::size_t padded = in + 2 * g.padding;
    if (kernel > padded) {
        throw DimensionError("kernel extent " + std::to_string(kernel) +
                             " exceeds padded input extent " + std::to_string(padded));
    }
    return (padded - kernel) / g.stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const Conv2dGeometry& geometry) {
    if (input.rank() != 3 || kernels.rank() != 4 || kernels.dim(1) != input.dim(0)) {
        throw DimensionError("conv2d shape mismatch: input " + shape_str(input.shape()) +
                             ", kernels " + shape_str(kernels.shape()));
    }
    const std::size_t k_count = kernels.dim(0), channels = input.dim(0);
    const std::size_t kh = kernels.dim(2), kw = kernels.dim(3);
    if (bias.size() != k_count) {
        throw DimensionError("conv2d bias " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(k_count) + " kernels");
    }
    const std::size_t h = input.dim(1), w = input.dim(2);
    const std::size_t oh = conv_output_extent(h, kh, geometry);
    const std::size_t ow = conv_output_extent(w, kw, geometry);
    const auto pad = static_cast<std::ptrdiff_t>(geometry.padding);
    const auto stride = static_cast<std::ptrdiff_t>(geometry.stride);

    Tensor out({k_count, oh, ow});
    const auto kdata = kernels.data();
    for (std::size_t k = 0; k < k_count; ++k) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = bias[k];
                const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy) * stride - pad;
                const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox) * stride - pad;
                for (std::size_t c = 0; c < channels; ++c) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(ky);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(kx);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += static_cast<double>(input.at(c, iy, ix)) *
                                   kdata[((k * channels + c) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.at(k, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = std::max(v, 0.0f);
    return out;
}

std::size_t pool_output_extent(std::size_t in, const PoolGeometry& g) {
    if (g.window == 0 || g.stride == 0) throw InvalidArgument("maxpool window and stride must be positive");
    if (g.window > in) {
        throw DimensionError("pool window " + std::to_string(g.window) + " exceeds spatial extent " +
                             std::to_string(in));
    }
    return (in - g.window) / g.stride + 1;
}

Tensor maxpool2d(const Tensor& t, const PoolGeometry& geometry, std::vector<std::size_t>& winners) {
    if (t.rank() != 3) throw DimensionError("maxpool2d expects C x H x W, got " + shape_str(t.shape()));
    const std::size_t channels = t.dim(0), h = t.dim(1), w = t.dim(2);
    const std::size_t oh = pool_output_extent(h, geometry);
    const std::size_t ow = pool_output_extent(w, geometry);
    Tensor out({channels, oh, ow});
    winners.assign(out.size(), 0);
    std::size_t o = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                std::size_t best = (c * h + oy * geometry.stride) * w + ox * geometry.stride;
                float best_v = t[best];
                for (std::size_t dy = 0; dy < geometry.window; ++dy) {
                    for (std::size_t dx = 0; dx < geometry.window; ++dx) {
                        const std::size_t idx =
                            (c * h + oy * geometry.stride + dy) * w + ox * geometry.stride + dx;
                        // Scan order is row-major, so a strict comparison keeps the
                        // lowest flat index among equal maxima.
                        if (t[idx] > best_v || (t[idx] == best_v && idx < best)) {
                            best_v = t[idx];
                            best = idx;
                        }
                    }
                }
                out[o] = best_v;
                winners[o] = best;
            }
        }
    }
    return out;
}

Tensor maxpool2d(const Tensor& t, const PoolGeometry& geometry) {
    std::vector<std::size_t> winners;
    return maxpool2d(t, geometry, winners);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor scale(const Tensor& t, float factor) {
    Tensor out = t;
    for (auto& v : out.data()) v *= factor;
    return out;
}

}  // namespace npc
