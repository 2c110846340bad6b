#pragma once

#include <cstddef>
#include <vector>

#include "p3d/field.hpp"

namespace p3d {

/// One-level orthonormal Haar decomposition of an image. For a 2x2 block
/// with a, b on the top row and c, d below:
///   LL = (a + b + c + d) / 2    LH = (a + b - c - d) / 2
///   HL = (a - b + c - d) / 2    HH = (a - b - c + d) / 2
struct SubbandImage {
    Image ll, lh, hl, hh;
    std::size_t source_nx = 0;
    std::size_t source_ny = 0;
};

SubbandImage dwt2(const Image& img);
Image idwt2(const SubbandImage& sub);

/// Channel-stacked subbands, shape (4, H/2, W/2) in order LL, LH, HL, HH.
FeatureMap stack_subbands(const SubbandImage& sub);
SubbandImage unstack_subbands(const FeatureMap& stacked);

/// Haar analysis of every channel of `x`. Output channel 4c + b holds subband
/// b (LL, LH, HL, HH) of input channel c. Orthonormal, so the adjoint of each
/// transform is the other.
FeatureMap haar_forward(const FeatureMap& x);
FeatureMap haar_inverse(const FeatureMap& coeffs);

/// Depth-wise kernels for a multi-level wavelet convolution. Layout is
/// [level][4 * channels][k][k]; no bias.
struct WtConvWeights {
    std::size_t levels = 2;
    std::size_t channels = 0;
    std::size_t kernel = 3;
    std::vector<double> w;

    WtConvWeights() = default;
    WtConvWeights(std::size_t levels, std::size_t channels, std::size_t kernel);

    std::size_t per_level() const noexcept { return 4 * channels * kernel * kernel; }
    double* level(std::size_t l) noexcept { return w.data() + l * per_level(); }
    const double* level(std::size_t l) const noexcept { return w.data() + l * per_level(); }

    /// Every kernel becomes a centred delta.
    void set_identity();
};

/// Wavelet convolution: at each level the LL band of the previous level is
/// Haar-transformed and its four subbands are convolved depth-wise; results
/// are inverse-transformed from the coarsest level up, each level's output
/// added into the next finer convolved LL band. Output shape equals input
/// shape. Spatial dims must be divisible by 2^levels.
FeatureMap wtconv(const FeatureMap& x, const WtConvWeights& w);

/// Reverse-mode pass through `wtconv`. Returns dL/dx and accumulates dL/dw
/// into `grad_w` (same layout as `w.w`).
FeatureMap wtconv_backward(const FeatureMap& x, const WtConvWeights& w, const FeatureMap& grad_out,
                           std::span<double> grad_w);

/// Receptive field of an l-level wavelet convolution with k x k kernels.
constexpr std::size_t receptive_field(std::size_t levels, std::size_t k) noexcept { return (std::size_t{1} << levels) * k; }

/// Number of stored kernel weights.
constexpr std::size_t param_count(std::size_t levels, std::size_t channels, std::size_t k) noexcept {
    return levels * 4 * channels * k * k;
}

/// Zero-padded depth-wise 2D cross-correlation with one k x k kernel per
/// channel (`kernels` is [channels][k][k]).
FeatureMap depthwise_conv(const FeatureMap& x, const double* kernels, std::size_t k);

/// Backward of `depthwise_conv`: returns dL/dx, accumulates dL/dkernels.
FeatureMap depthwise_conv_backward(const FeatureMap& x, const double* kernels, std::size_t k,
                                   const FeatureMap& grad_out, double* grad_kernels);

}  // namespace p3d
