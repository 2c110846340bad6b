#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "p3d/wavelet.hpp"
#include "support.hpp"

using namespace p3d;
using p3d::testing::random_features;
using p3d::testing::random_image;

namespace {

double sum_sq(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double energy(const SubbandImage& s) {
    return sum_sq(s.ll.values()) + sum_sq(s.lh.values()) + sum_sq(s.hl.values()) + sum_sq(s.hh.values());
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Zero-padded k x k cross-correlation of one image.
Image naive_conv(const Image& x, const double* k, std::size_t ks) {
    const long r = static_cast<long>(ks / 2);
    Image out(x.nx(), x.ny());
    for (long j = 0; j < static_cast<long>(x.ny()); ++j)
        for (long i = 0; i < static_cast<long>(x.nx()); ++i) {
            double acc = 0.0;
            for (long dj = -r; dj <= r; ++dj)
                for (long di = -r; di <= r; ++di) {
                    const long ii = i + di, jj = j + dj;
                    if (ii < 0 || jj < 0 || ii >= static_cast<long>(x.nx()) || jj >= static_cast<long>(x.ny())) continue;
                    acc += k[(dj + r) * static_cast<long>(ks) + (di + r)] * x(ii, jj);
                }
            out(i, j) = acc;
        }
    return out;
}

Image channel_image(const FeatureMap& f, std::size_t c) {
    Image img(f.width(), f.height());
    for (std::size_t y = 0; y < f.height(); ++y)
        for (std::size_t x = 0; x < f.width(); ++x) img(x, y) = f(c, y, x);
    return img;
}

// Straight recursive reading of the wavelet convolution for one channel.
Image wtconv_channel(const Image& x, const WtConvWeights& w, std::size_t c, std::size_t level) {
    const SubbandImage s = dwt2(x);
    const std::size_t kk = w.kernel * w.kernel;
    const double* base = w.level(level);
    SubbandImage y{naive_conv(s.ll, base + (4 * c + 0) * kk, w.kernel), naive_conv(s.lh, base + (4 * c + 1) * kk, w.kernel),
                   naive_conv(s.hl, base + (4 * c + 2) * kk, w.kernel), naive_conv(s.hh, base + (4 * c + 3) * kk, w.kernel),
                   s.source_nx, s.source_ny};
    if (level + 1 < w.levels) {
        const Image deeper = wtconv_channel(s.ll, w, c, level + 1);
        for (std::size_t i = 0; i < y.ll.size(); ++i) y.ll.values()[i] += deeper.values()[i];
    }
    return idwt2(y);
}

WtConvWeights random_weights(std::size_t levels, std::size_t channels, std::size_t k, std::uint64_t seed) {
    WtConvWeights w(levels, channels, k);
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    for (double& v : w.w) v = n(rng);
    return w;
}

}  // namespace

TEST(Dwt2, ConstantTwoByTwo) {
    const SubbandImage s = dwt2(Image(2, 2, 1.0));
    EXPECT_DOUBLE_EQ(s.ll(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(s.lh(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(s.hl(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(s.hh(0, 0), 0.0);
}

TEST(Dwt2, BlockMatchesHaarMatrixProduct) {
    Image img(2, 2);
    img(0, 0) = 1.0;  // a
    img(1, 0) = 2.0;  // b
    img(0, 1) = 3.0;  // c
    img(1, 1) = 4.0;  // d
    const double H[4][4] = {{0.5, 0.5, 0.5, 0.5}, {0.5, 0.5, -0.5, -0.5}, {0.5, -0.5, 0.5, -0.5}, {0.5, -0.5, -0.5, 0.5}};
    const double v[4] = {1.0, 2.0, 3.0, 4.0};
    double expect[4] = {0, 0, 0, 0};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) expect[r] += H[r][c] * v[c];
    const SubbandImage s = dwt2(img);
    EXPECT_DOUBLE_EQ(s.ll(0, 0), 5.0);
    EXPECT_NEAR(s.ll(0, 0), expect[0], 1e-15);
    EXPECT_NEAR(s.lh(0, 0), expect[1], 1e-15);
    EXPECT_NEAR(s.hl(0, 0), expect[2], 1e-15);
    EXPECT_NEAR(s.hh(0, 0), expect[3], 1e-15);
}

TEST(Dwt2, EnergyPreserved) {
    const Image x = random_image(8, 8, 1);
    EXPECT_NEAR(energy(dwt2(x)), sum_sq(x.values()), 1e-10);
}

TEST(Dwt2, OddDimensionRejected) {
    EXPECT_THROW(dwt2(Image(3, 4)), DimensionError);
    EXPECT_THROW(dwt2(Image(4, 5)), DimensionError);
}

TEST(Dwt2, SubbandShapes) {
    const SubbandImage s = dwt2(random_image(12, 6, 2));
    for (const Image* b : {&s.ll, &s.lh, &s.hl, &s.hh}) {
        EXPECT_EQ(b->nx(), 6u);
        EXPECT_EQ(b->ny(), 3u);
    }
    EXPECT_EQ(s.source_nx, 12u);
    EXPECT_EQ(s.source_ny, 6u);
}

TEST(Idwt2, PerfectReconstruction) {
    const Image x = random_image(64, 64, 3);
    EXPECT_LE(max_abs_diff(idwt2(dwt2(x)).values(), x.values()), 1e-10);
}

TEST(Idwt2, LLOnlyGivesConstantBlock) {
    SubbandImage s{Image(1, 1, 2.0), Image(1, 1), Image(1, 1), Image(1, 1), 2, 2};
    const Image x = idwt2(s);
    for (double v : x.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Idwt2, Linear) {
    const SubbandImage s1 = dwt2(random_image(8, 4, 4)), s2 = dwt2(random_image(8, 4, 5));
    const double a = 0.7, b = -1.3;
    SubbandImage mix = s1;
    Image* m[4] = {&mix.ll, &mix.lh, &mix.hl, &mix.hh};
    const Image* p[4] = {&s1.ll, &s1.lh, &s1.hl, &s1.hh};
    const Image* q[4] = {&s2.ll, &s2.lh, &s2.hl, &s2.hh};
    for (int k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < m[k]->size(); ++i) m[k]->values()[i] = a * p[k]->values()[i] + b * q[k]->values()[i];
    const Image lhs = idwt2(mix), x1 = idwt2(s1), x2 = idwt2(s2);
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs.values()[i], a * x1.values()[i] + b * x2.values()[i], 1e-12);
}

TEST(Idwt2, MismatchedSubbandsRejected) {
    SubbandImage s{Image(2, 2), Image(2, 2), Image(2, 1), Image(2, 2), 4, 4};
    EXPECT_THROW(idwt2(s), DimensionError);
}

TEST(Dwt2, AdjointEqualsInverse) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Image x = random_image(16, 10, 100 + seed);
        const SubbandImage s = dwt2(random_image(16, 10, 200 + seed));
        const SubbandImage dx = dwt2(x);
        const Image is = idwt2(s);
        double lhs = 0.0, rhs = 0.0;
        const Image* a[4] = {&dx.ll, &dx.lh, &dx.hl, &dx.hh};
        const Image* b[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
        for (int k = 0; k < 4; ++k)
            for (std::size_t i = 0; i < a[k]->size(); ++i) lhs += a[k]->values()[i] * b[k]->values()[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * is.values()[i];
        EXPECT_NEAR(lhs, rhs, 1e-10);
    }
}

TEST(Dwt2, WhiteNoiseStaysWhite) {
    // 10^5 pixels of N(0, sigma^2); each subband variance is chi-square with
    // n = 25000 degrees of freedom, relative sd sqrt(2 / n) ~ 0.9%.
    const double sigma = 0.3;
    Rng rng(77);
    std::normal_distribution<double> n(0.0, sigma);
    Image x(400, 250);
    for (double& v : x.values()) v = n(rng);
    const SubbandImage s = dwt2(x);
    const Image* b[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
    const double tol = 5.0 * std::sqrt(2.0 / 25000.0);
    for (const Image* band : b) {
        const double var = sum_sq(band->values()) / static_cast<double>(band->size());
        EXPECT_NEAR(var / (sigma * sigma), 1.0, tol);
    }
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            double c = 0.0;
            for (std::size_t k = 0; k < b[i]->size(); ++k) c += b[i]->values()[k] * b[j]->values()[k];
            c /= static_cast<double>(b[i]->size()) * sigma * sigma;
            EXPECT_LT(std::abs(c), 5.0 / std::sqrt(25000.0));
        }
}

TEST(Stack, RoundTripOrderAndShape) {
    const SubbandImage s = dwt2(random_image(16, 16, 8));
    const FeatureMap f = stack_subbands(s);
    EXPECT_EQ(f.channels(), 4u);
    EXPECT_EQ(f.height(), 8u);
    EXPECT_EQ(f.width(), 8u);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
            EXPECT_EQ(f(0, y, x), s.ll(x, y));
            EXPECT_EQ(f(1, y, x), s.lh(x, y));
            EXPECT_EQ(f(2, y, x), s.hl(x, y));
            EXPECT_EQ(f(3, y, x), s.hh(x, y));
        }
    const SubbandImage u = unstack_subbands(f);
    EXPECT_EQ(u.ll, s.ll);
    EXPECT_EQ(u.lh, s.lh);
    EXPECT_EQ(u.hl, s.hl);
    EXPECT_EQ(u.hh, s.hh);
    EXPECT_EQ(idwt2(u), idwt2(s));
}

TEST(Stack, WrongChannelCountRejected) { EXPECT_THROW(unstack_subbands(FeatureMap(3, 4, 4)), DimensionError); }

TEST(Haar, MultiChannelMatchesPerChannelDwt) {
    const FeatureMap x = random_features(3, 8, 12, 9);
    const FeatureMap c = haar_forward(x);
    ASSERT_EQ(c.channels(), 12u);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        const FeatureMap s = stack_subbands(dwt2(channel_image(x, ch)));
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t i = 0; i < s.plane_size(); ++i) EXPECT_EQ(c.channel(4 * ch + b)[i], s.channel(b)[i]);
    }
    EXPECT_LE(max_abs_diff(haar_inverse(c).values(), x.values()), 1e-12);
}

TEST(WtConv, IdentityKernelsSingleLevel) {
    const FeatureMap x = random_features(3, 16, 16, 12);
    WtConvWeights w(1, 3, 3);
    w.set_identity();
    EXPECT_LE(max_abs_diff(wtconv(x, w).values(), x.values()), 1e-10);
}

TEST(WtConv, ReceptiveFieldAndParamCount) {
    static_assert(receptive_field(2, 3) == 12);
    static_assert(param_count(2, 8, 3) == 576);
    EXPECT_EQ(WtConvWeights(2, 8, 3).w.size(), 576u);
}

TEST(WtConv, MatchesRecursiveDefinition) {
    for (std::size_t levels : {1u, 2u, 3u}) {
        const FeatureMap x = random_features(2, 16, 24, 30 + levels);
        const WtConvWeights w = random_weights(levels, 2, 3, 40 + levels);
        const FeatureMap y = wtconv(x, w);
        for (std::size_t c = 0; c < 2; ++c) {
            const Image expect = wtconv_channel(channel_image(x, c), w, c, 0);
            EXPECT_LE(max_abs_diff(channel_image(y, c).values(), expect.values()), 1e-12) << "levels " << levels;
        }
    }
}

TEST(WtConv, LinearInInput) {
    const WtConvWeights w = random_weights(2, 3, 3, 5);
    const FeatureMap a = random_features(3, 8, 8, 1), b = random_features(3, 8, 8, 2);
    FeatureMap mix(3, 8, 8);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.values()[i] = 2.0 * a.values()[i] - 0.5 * b.values()[i];
    const FeatureMap ya = wtconv(a, w), yb = wtconv(b, w), ym = wtconv(mix, w);
    for (std::size_t i = 0; i < ym.size(); ++i) EXPECT_NEAR(ym.values()[i], 2.0 * ya.values()[i] - 0.5 * yb.values()[i], 1e-12);
}

TEST(WtConv, ShapePreservedAndErrors) {
    const WtConvWeights w = random_weights(2, 2, 3, 6);
    for (auto [h, wd] : {std::pair{4u, 4u}, std::pair{8u, 12u}, std::pair{16u, 4u}}) {
        const FeatureMap y = wtconv(random_features(2, h, wd, h * wd), w);
        EXPECT_EQ(y.channels(), 2u);
        EXPECT_EQ(y.height(), h);
        EXPECT_EQ(y.width(), wd);
    }
    EXPECT_THROW(wtconv(FeatureMap(2, 6, 8), w), DimensionError);
    EXPECT_THROW(wtconv(FeatureMap(3, 8, 8), w), WeightError);
    EXPECT_THROW(WtConvWeights(2, 2, 4), WeightError);
}

TEST(WtConv, BackwardIsAdjointAndWeightGradientMatchesDifferences) {
    const WtConvWeights w = random_weights(2, 2, 3, 7);
    const FeatureMap x = random_features(2, 8, 8, 8), g = random_features(2, 8, 8, 9);
    std::vector<double> gw(w.w.size(), 0.0);
    const FeatureMap gx = wtconv_backward(x, w, g, gw);
    // <J x, g> = <x, J^T g> for a map linear in x.
    const FeatureMap y = wtconv(x, w);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y.values()[i] * g.values()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * gx.values()[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
    // Also linear in w, so central differences are exact up to round-off.
    for (std::size_t k = 0; k < w.w.size(); k += 7) {
        WtConvWeights wp = w, wm = w;
        wp.w[k] += 1e-3;
        wm.w[k] -= 1e-3;
        const FeatureMap yp = wtconv(x, wp), ym = wtconv(x, wm);
        double d = 0.0;
        for (std::size_t i = 0; i < yp.size(); ++i) d += (yp.values()[i] - ym.values()[i]) * g.values()[i];
        EXPECT_NEAR(d / 2e-3, gw[k], 1e-9);
    }
}

TEST(DepthwiseConv, MatchesNaive) {
    const FeatureMap x = random_features(3, 6, 10, 10);
    std::vector<double> k(3 * 25);
    Rng rng(4);
    std::normal_distribution<double> n;
    for (double& v : k) v = n(rng);
    const FeatureMap y = depthwise_conv(x, k.data(), 5);
    for (std::size_t c = 0; c < 3; ++c) {
        const Image e = naive_conv(channel_image(x, c), k.data() + c * 25, 5);
        EXPECT_LE(max_abs_diff(channel_image(y, c).values(), e.values()), 1e-12);
    }
}
