#include "p3d/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "p3d/wavelet.hpp"

namespace p3d::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Column matrix of shape (cin*k*k, h*w) for zero-padded k x k patches.
RowMat im2col(const FeatureMap& x, std::size_t k) {
    const long h = static_cast<long>(x.height()), w = static_cast<long>(x.width());
    const long r = static_cast<long>(k / 2);
    RowMat cols = RowMat::Zero(static_cast<long>(x.channels() * k * k), h * w);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const double* in = x.channel(c).data();
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* row = cols.row(static_cast<long>((c * k + ky) * k + kx)).data();
                const long dy = static_cast<long>(ky) - r, dx = static_cast<long>(kx) - r;
                const long y0 = std::max(0L, -dy), y1 = std::min(h, h - dy);
                const long x0 = std::max(0L, -dx), x1 = std::min(w, w - dx);
                for (long y = y0; y < y1; ++y) {
                    const double* src = in + (y + dy) * w + dx;
                    double* dst = row + y * w;
                    std::copy(src + x0, src + x1, dst + x0);
                }
            }
        }
    }
    return cols;
}

void col2im(const RowMat& cols, std::size_t k, FeatureMap& out) {
    const long h = static_cast<long>(out.height()), w = static_cast<long>(out.width());
    const long r = static_cast<long>(k / 2);
    for (std::size_t c = 0; c < out.channels(); ++c) {
        double* dst = out.channel(c).data();
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* row = cols.row(static_cast<long>((c * k + ky) * k + kx)).data();
                const long dy = static_cast<long>(ky) - r, dx = static_cast<long>(kx) - r;
                const long y0 = std::max(0L, -dy), y1 = std::min(h, h - dy);
                const long x0 = std::max(0L, -dx), x1 = std::min(w, w - dx);
                for (long y = y0; y < y1; ++y) {
                    double* d = dst + (y + dy) * w + dx;
                    const double* s = row + y * w;
                    for (long xx = x0; xx < x1; ++xx) d[xx] += s[xx];
                }
            }
        }
    }
}

void check_input(const FeatureMap& x, std::size_t cin, const char* what) {
    if (x.channels() != cin) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(cin) + " input channels, got " +
                             std::to_string(x.channels()));
    }
}

WtConvWeights view_weights(const WtConv& layer, std::span<const double> params) {
    WtConvWeights w(layer.levels, layer.channels, layer.k);
    std::copy_n(params.begin() + static_cast<long>(layer.offset), w.w.size(), w.w.begin());
    return w;
}

}  // namespace

FeatureMap Conv2d::forward(std::span<const double> params, const FeatureMap& x) const {
    check_input(x, cin, "Conv2d");
    const long hw = static_cast<long>(x.plane_size());
    FeatureMap y(cout, x.height(), x.width());
    CMapMat W(params.data() + offset, static_cast<long>(cout), static_cast<long>(cin * k * k));
    MapMat Y(y.data(), static_cast<long>(cout), hw);
    if (k == 1) {
        Y.noalias() = W * CMapMat(x.data(), static_cast<long>(cin), hw);
    } else {
        Y.noalias() = W * im2col(x, k);
    }
    const double* b = params.data() + bias_offset();
    for (std::size_t c = 0; c < cout; ++c) Y.row(static_cast<long>(c)).array() += b[c];
    return y;
}

FeatureMap Conv2d::backward(std::span<const double> params, const FeatureMap& x, const FeatureMap& grad_out,
                            std::span<double> grads) const {
    check_input(x, cin, "Conv2d::backward");
    const long hw = static_cast<long>(x.plane_size());
    CMapMat W(params.data() + offset, static_cast<long>(cout), static_cast<long>(cin * k * k));
    MapMat gW(grads.data() + offset, static_cast<long>(cout), static_cast<long>(cin * k * k));
    CMapMat gY(grad_out.data(), static_cast<long>(cout), hw);
    double* gb = grads.data() + bias_offset();
    for (std::size_t c = 0; c < cout; ++c) gb[c] += gY.row(static_cast<long>(c)).sum();

    FeatureMap gx(cin, x.height(), x.width());
    if (k == 1) {
        CMapMat X(x.data(), static_cast<long>(cin), hw);
        gW.noalias() += gY * X.transpose();
        MapMat(gx.data(), static_cast<long>(cin), hw).noalias() = W.transpose() * gY;
    } else {
        RowMat cols = im2col(x, k);
        gW.noalias() += gY * cols.transpose();
        RowMat gcols = W.transpose() * gY;
        col2im(gcols, k, gx);
    }
    return gx;
}

FeatureMap WtConv::forward(std::span<const double> params, const FeatureMap& x) const {
    return wtconv(x, view_weights(*this, params));
}

FeatureMap WtConv::backward(std::span<const double> params, const FeatureMap& x, const FeatureMap& grad_out,
                            std::span<double> grads) const {
    return wtconv_backward(x, view_weights(*this, params), grad_out, grads.subspan(offset, param_count()));
}

FeatureMap silu(const FeatureMap& x) {
    FeatureMap y = x;
    for (double& v : y.values()) v = v / (1.0 + std::exp(-v));
    return y;
}

FeatureMap silu_backward(const FeatureMap& x, const FeatureMap& grad_out) {
    FeatureMap g(x.channels(), x.height(), x.width());
    auto xs = x.values();
    auto go = grad_out.values();
    auto gs = g.values();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-xs[i]));
        gs[i] = go[i] * s * (1.0 + xs[i] * (1.0 - s));
    }
    return g;
}

FeatureMap avg_pool2(const FeatureMap& x) {
    if (x.height() % 2 || x.width() % 2) throw DimensionError("avg_pool2: odd spatial dims");
    FeatureMap y(x.channels(), x.height() / 2, x.width() / 2);
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t i = 0; i < y.height(); ++i)
            for (std::size_t j = 0; j < y.width(); ++j)
                y(c, i, j) = 0.25 * (x(c, 2 * i, 2 * j) + x(c, 2 * i, 2 * j + 1) + x(c, 2 * i + 1, 2 * j) +
                                     x(c, 2 * i + 1, 2 * j + 1));
    return y;
}

FeatureMap avg_pool2_backward(const FeatureMap& grad_out) {
    FeatureMap g(grad_out.channels(), grad_out.height() * 2, grad_out.width() * 2);
    for (std::size_t c = 0; c < g.channels(); ++c)
        for (std::size_t i = 0; i < g.height(); ++i)
            for (std::size_t j = 0; j < g.width(); ++j) g(c, i, j) = 0.25 * grad_out(c, i / 2, j / 2);
    return g;
}

FeatureMap upsample2(const FeatureMap& x) {
    FeatureMap y(x.channels(), x.height() * 2, x.width() * 2);
    for (std::size_t c = 0; c < y.channels(); ++c)
        for (std::size_t i = 0; i < y.height(); ++i)
            for (std::size_t j = 0; j < y.width(); ++j) y(c, i, j) = x(c, i / 2, j / 2);
    return y;
}

FeatureMap upsample2_backward(const FeatureMap& grad_out) {
    FeatureMap g(grad_out.channels(), grad_out.height() / 2, grad_out.width() / 2);
    for (std::size_t c = 0; c < grad_out.channels(); ++c)
        for (std::size_t i = 0; i < grad_out.height(); ++i)
            for (std::size_t j = 0; j < grad_out.width(); ++j) g(c, i / 2, j / 2) += grad_out(c, i, j);
    return g;
}

void add_inplace(FeatureMap& a, const FeatureMap& b) {
    if (!a.same_shape(b)) throw DimensionError("add_inplace: shape mismatch");
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

}  // namespace p3d::nn
