#pragma once

#include <cstddef>
#include <span>

#include "p3d/field.hpp"

// Minimal layers for the denoiser. Parameters live in one flat vector owned by
// the network; layers hold offsets into it and gradients use the same layout.
namespace p3d::nn {

/// Dense k x k convolution, zero padding, stride 1. Weights [cout][cin][k][k]
/// followed by cout biases.
struct Conv2d {
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::size_t k = 3;
    std::size_t offset = 0;

    std::size_t weight_count() const noexcept { return cout * cin * k * k; }
    std::size_t param_count() const noexcept { return weight_count() + cout; }
    std::size_t bias_offset() const noexcept { return offset + weight_count(); }

    FeatureMap forward(std::span<const double> params, const FeatureMap& x) const;
    /// Returns dL/dx and accumulates weight and bias gradients into `grads`.
    FeatureMap backward(std::span<const double> params, const FeatureMap& x, const FeatureMap& grad_out,
                        std::span<double> grads) const;
};

/// Multi-level wavelet convolution over `channels` feature channels.
struct WtConv {
    std::size_t channels = 0;
    std::size_t levels = 2;
    std::size_t k = 3;
    std::size_t offset = 0;

    std::size_t param_count() const noexcept { return levels * 4 * channels * k * k; }

    FeatureMap forward(std::span<const double> params, const FeatureMap& x) const;
    FeatureMap backward(std::span<const double> params, const FeatureMap& x, const FeatureMap& grad_out,
                        std::span<double> grads) const;
};

FeatureMap silu(const FeatureMap& x);
FeatureMap silu_backward(const FeatureMap& x, const FeatureMap& grad_out);

FeatureMap avg_pool2(const FeatureMap& x);
FeatureMap avg_pool2_backward(const FeatureMap& grad_out);

FeatureMap upsample2(const FeatureMap& x);
FeatureMap upsample2_backward(const FeatureMap& grad_out);

void add_inplace(FeatureMap& a, const FeatureMap& b);

}  // namespace p3d::nn
