#include "p3d/wavelet.hpp"

#include <algorithm>
#include <string>

namespace p3d {

namespace {

void require_even(std::size_t h, std::size_t w, const char* what) {
    if (h == 0 || w == 0 || h % 2 != 0 || w % 2 != 0) {
        throw DimensionError(std::string(what) + ": spatial dims (" + std::to_string(w) + ", " + std::to_string(h) +
                             ") must be even");
    }
}

// Copies channels [4c, 4c+1, 4c+2, 4c+3] with b == 0 (the LL bands) into a
// C-channel map.
FeatureMap ll_bands(const FeatureMap& coeffs) {
    const std::size_t c = coeffs.channels() / 4;
    FeatureMap out(c, coeffs.height(), coeffs.width());
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto src = coeffs.channel(4 * ch);
        std::copy(src.begin(), src.end(), out.channel(ch).begin());
    }
    return out;
}

void add_into_ll(FeatureMap& coeffs, const FeatureMap& ll) {
    for (std::size_t ch = 0; ch < ll.channels(); ++ch) {
        auto dst = coeffs.channel(4 * ch);
        auto src = ll.channel(ch);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

}  // namespace

FeatureMap haar_forward(const FeatureMap& x) {
    require_even(x.height(), x.width(), "haar_forward");
    const std::size_t h2 = x.height() / 2, w2 = x.width() / 2;
    FeatureMap out(4 * x.channels(), h2, w2);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        for (std::size_t y = 0; y < h2; ++y) {
            for (std::size_t xx = 0; xx < w2; ++xx) {
                const double a = x(c, 2 * y, 2 * xx), b = x(c, 2 * y, 2 * xx + 1);
                const double cc = x(c, 2 * y + 1, 2 * xx), d = x(c, 2 * y + 1, 2 * xx + 1);
                out(4 * c + 0, y, xx) = 0.5 * (a + b + cc + d);
                out(4 * c + 1, y, xx) = 0.5 * (a + b - cc - d);
                out(4 * c + 2, y, xx) = 0.5 * (a - b + cc - d);
                out(4 * c + 3, y, xx) = 0.5 * (a - b - cc + d);
            }
        }
    }
    return out;
}

FeatureMap haar_inverse(const FeatureMap& coeffs) {
    if (coeffs.channels() % 4 != 0) {
        throw DimensionError("haar_inverse: channel count " + std::to_string(coeffs.channels()) +
                             " is not a multiple of 4");
    }
    const std::size_t c_out = coeffs.channels() / 4;
    const std::size_t h2 = coeffs.height(), w2 = coeffs.width();
    FeatureMap out(c_out, 2 * h2, 2 * w2);
    for (std::size_t c = 0; c < c_out; ++c) {
        for (std::size_t y = 0; y < h2; ++y) {
            for (std::size_t xx = 0; xx < w2; ++xx) {
                const double ll = coeffs(4 * c, y, xx), lh = coeffs(4 * c + 1, y, xx);
                const double hl = coeffs(4 * c + 2, y, xx), hh = coeffs(4 * c + 3, y, xx);
                out(c, 2 * y, 2 * xx) = 0.5 * (ll + lh + hl + hh);
                out(c, 2 * y, 2 * xx + 1) = 0.5 * (ll + lh - hl - hh);
                out(c, 2 * y + 1, 2 * xx) = 0.5 * (ll - lh + hl - hh);
                out(c, 2 * y + 1, 2 * xx + 1) = 0.5 * (ll - lh - hl + hh);
            }
        }
    }
    return out;
}

SubbandImage dwt2(const Image& img) {
    require_even(img.ny(), img.nx(), "dwt2");
    return unstack_subbands(haar_forward(to_feature_map(img)));
}

Image idwt2(const SubbandImage& sub) {
    const std::size_t nx = sub.ll.nx(), ny = sub.ll.ny();
    for (const Image* band : {&sub.lh, &sub.hl, &sub.hh}) {
        if (band->nx() != nx || band->ny() != ny) throw DimensionError("idwt2: subband shapes differ");
    }
    if (sub.source_nx != 2 * nx || sub.source_ny != 2 * ny) {
        throw DimensionError("idwt2: source shape is not twice the subband shape");
    }
    return to_image(haar_inverse(stack_subbands(sub)));
}

FeatureMap stack_subbands(const SubbandImage& sub) {
    const std::size_t nx = sub.ll.nx(), ny = sub.ll.ny();
    FeatureMap out(4, ny, nx);
    const Image* bands[4] = {&sub.ll, &sub.lh, &sub.hl, &sub.hh};
    for (std::size_t b = 0; b < 4; ++b) {
        if (bands[b]->nx() != nx || bands[b]->ny() != ny) throw DimensionError("stack_subbands: subband shapes differ");
        std::copy(bands[b]->values().begin(), bands[b]->values().end(), out.channel(b).begin());
    }
    return out;
}

SubbandImage unstack_subbands(const FeatureMap& stacked) {
    if (stacked.channels() != 4) {
        throw DimensionError("unstack_subbands: expected 4 channels, got " + std::to_string(stacked.channels()));
    }
    const std::size_t nx = stacked.width(), ny = stacked.height();
    auto band = [&](std::size_t b) {
        auto ch = stacked.channel(b);
        return Image(nx, ny, std::vector<double>(ch.begin(), ch.end()));
    };
    return SubbandImage{band(0), band(1), band(2), band(3), 2 * nx, 2 * ny};
}

WtConvWeights::WtConvWeights(std::size_t levels_, std::size_t channels_, std::size_t kernel_)
    : levels(levels_), channels(channels_), kernel(kernel_), w(param_count(levels_, channels_, kernel_), 0.0) {
    if (kernel % 2 == 0) throw WeightError("wavelet convolution kernel size must be odd");
}

void WtConvWeights::set_identity() {
    std::fill(w.begin(), w.end(), 0.0);
    const std::size_t kk = kernel * kernel;
    for (std::size_t l = 0; l < levels; ++l)
        for (std::size_t c = 0; c < 4 * channels; ++c) level(l)[c * kk + kk / 2] = 1.0;
}

FeatureMap depthwise_conv(const FeatureMap& x, const double* kernels, std::size_t k) {
    const std::size_t h = x.height(), wd = x.width();
    const long r = static_cast<long>(k / 2);
    FeatureMap out(x.channels(), h, wd);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const double* ker = kernels + c * k * k;
        const double* in = x.channel(c).data();
        double* o = out.channel(c).data();
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double wv = ker[ky * k + kx];
                if (wv == 0.0) continue;
                const long dy = static_cast<long>(ky) - r, dx = static_cast<long>(kx) - r;
                const long y0 = std::max(0L, -dy), y1 = std::min(static_cast<long>(h), static_cast<long>(h) - dy);
                const long x0 = std::max(0L, -dx), x1 = std::min(static_cast<long>(wd), static_cast<long>(wd) - dx);
                for (long y = y0; y < y1; ++y) {
                    const double* row = in + (y + dy) * static_cast<long>(wd) + dx;
                    double* orow = o + y * static_cast<long>(wd);
                    for (long xx = x0; xx < x1; ++xx) orow[xx] += wv * row[xx];
                }
            }
        }
    }
    return out;
}

FeatureMap depthwise_conv_backward(const FeatureMap& x, const double* kernels, std::size_t k,
                                   const FeatureMap& grad_out, double* grad_kernels) {
    const std::size_t h = x.height(), wd = x.width();
    const long r = static_cast<long>(k / 2);
    FeatureMap gx(x.channels(), h, wd);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const double* ker = kernels + c * k * k;
        double* gk = grad_kernels + c * k * k;
        const double* in = x.channel(c).data();
        const double* g = grad_out.channel(c).data();
        double* gi = gx.channel(c).data();
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double wv = ker[ky * k + kx];
                const long dy = static_cast<long>(ky) - r, dx = static_cast<long>(kx) - r;
                const long y0 = std::max(0L, -dy), y1 = std::min(static_cast<long>(h), static_cast<long>(h) - dy);
                const long x0 = std::max(0L, -dx), x1 = std::min(static_cast<long>(wd), static_cast<long>(wd) - dx);
                double acc = 0.0;
                for (long y = y0; y < y1; ++y) {
                    const double* row = in + (y + dy) * static_cast<long>(wd) + dx;
                    double* girow = gi + (y + dy) * static_cast<long>(wd) + dx;
                    const double* grow = g + y * static_cast<long>(wd);
                    for (long xx = x0; xx < x1; ++xx) {
                        acc += grow[xx] * row[xx];
                        girow[xx] += wv * grow[xx];
                    }
                }
                gk[ky * k + kx] += acc;
            }
        }
    }
    return gx;
}

namespace {

void check_wtconv(const FeatureMap& x, const WtConvWeights& w) {
    if (w.channels != x.channels()) {
        throw WeightError("wtconv: kernels declared for " + std::to_string(w.channels) + " channels, input has " +
                          std::to_string(x.channels()));
    }
    if (w.w.size() != param_count(w.levels, w.channels, w.kernel)) throw WeightError("wtconv: weight tensor size mismatch");
    const std::size_t stride = std::size_t{1} << w.levels;
    if (x.height() % stride != 0 || x.width() % stride != 0) {
        throw DimensionError("wtconv: spatial dims (" + std::to_string(x.width()) + ", " + std::to_string(x.height()) +
                             ") not divisible by 2^" + std::to_string(w.levels));
    }
}

}  // namespace

FeatureMap wtconv(const FeatureMap& x, const WtConvWeights& w) {
    check_wtconv(x, w);
    std::vector<FeatureMap> convolved;
    convolved.reserve(w.levels);
    FeatureMap ll = x;
    for (std::size_t l = 0; l < w.levels; ++l) {
        FeatureMap coeffs = haar_forward(ll);
        convolved.push_back(depthwise_conv(coeffs, w.level(l), w.kernel));
        ll = ll_bands(coeffs);
    }
    FeatureMap z;
    for (std::size_t l = w.levels; l-- > 0;) {
        if (l + 1 < w.levels) add_into_ll(convolved[l], z);
        z = haar_inverse(convolved[l]);
    }
    return z;
}

FeatureMap wtconv_backward(const FeatureMap& x, const WtConvWeights& w, const FeatureMap& grad_out,
                           std::span<double> grad_w) {
    check_wtconv(x, w);
    if (!grad_out.same_shape(x)) throw DimensionError("wtconv_backward: gradient shape mismatch");
    if (grad_w.size() != w.w.size()) throw WeightError("wtconv_backward: gradient buffer size mismatch");

    std::vector<FeatureMap> coeffs;
    coeffs.reserve(w.levels);
    FeatureMap ll = x;
    for (std::size_t l = 0; l < w.levels; ++l) {
        coeffs.push_back(haar_forward(ll));
        ll = ll_bands(coeffs.back());
    }

    // Gradient w.r.t. each level's (convolved + deeper) coefficients.
    std::vector<FeatureMap> g_conv(w.levels);
    FeatureMap g = grad_out;
    for (std::size_t l = 0; l < w.levels; ++l) {
        g_conv[l] = haar_forward(g);
        g = ll_bands(g_conv[l]);
    }

    FeatureMap g_ll;
    for (std::size_t l = w.levels; l-- > 0;) {
        FeatureMap gc = depthwise_conv_backward(coeffs[l], w.level(l), w.kernel, g_conv[l],
                                                grad_w.data() + l * w.per_level());
        if (l + 1 < w.levels) add_into_ll(gc, g_ll);
        g_ll = haar_inverse(gc);
    }
    return g_ll;
}

}  // namespace p3d
