#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "p3d/provider.hpp"
#include "p3d/wavelet.hpp"
#include "support.hpp"

using namespace p3d;
using p3d::testing::random_features;
using p3d::testing::random_image;
using p3d::testing::random_volume;

namespace {

// log N(x; marginal of N(m, s2) data at step t), written out from the tables.
double log_marginal(double x, double m, double mu, double s2, int t, const NoiseSchedule& s) {
    const double d = std::exp(-s.theta_bar[t]);
    const double mean = mu + (m - mu) * d;
    const double var = s2 * d * d + s.lambda * s.lambda * (1.0 - d * d);
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

}  // namespace

TEST(Domain, RoundTrip) {
    const Image img = random_image(8, 6, 1);
    for (Domain d : {Domain::Wavelet, Domain::Image}) {
        const FeatureMap f = to_domain(img, d);
        EXPECT_EQ(f.channels(), d == Domain::Wavelet ? 4u : 1u);
        const Image back = from_domain(f, d);
        for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.values()[i], img.values()[i], 1e-14);
    }
}

TEST(OracleProvider, ReplaysAndIsIdempotent) {
    auto store = std::make_shared<NoiseStore>();
    const FeatureMap eps = random_features(4, 2, 2, 3);
    store->put(7, Plane::XZ, 1, eps);
    const auto p = oracle_provider(store);
    const FeatureMap x(4, 2, 2), mu(4, 2, 2);
    const NoiseQuery q{x, mu, 7, Plane::XZ, 1, Domain::Wavelet};
    EXPECT_EQ(p->predict(q), eps);
    EXPECT_EQ(p->predict(q), p->predict(q));
}

TEST(OracleProvider, MissingKeyIsLookupError) {
    auto store = std::make_shared<NoiseStore>();
    store->put(7, Plane::XY, 0, FeatureMap(4, 2, 2));
    const OracleProvider p(store);
    const FeatureMap x(4, 2, 2), mu(4, 2, 2);
    EXPECT_THROW(p.predict({x, mu, 6, Plane::XY, 0, Domain::Wavelet}), LookupError);
    EXPECT_THROW(p.predict({x, mu, 7, Plane::XZ, 0, Domain::Wavelet}), LookupError);
    EXPECT_THROW(p.predict({x, mu, 7, Plane::XY, 1, Domain::Wavelet}), LookupError);
    const FeatureMap wrong(4, 4, 4);
    EXPECT_THROW(p.predict({wrong, wrong, 7, Plane::XY, 0, Domain::Wavelet}), DimensionError);
}

TEST(RecordingProvider, StoresEveryAnswer) {
    const NoiseSchedule s = build_schedule(10, kDefaultLambda);
    const GaussianProvider g(Volume({4, 4, 4}, 0.5f), 0.01, s);
    auto store = std::make_shared<NoiseStore>();
    const RecordingProvider rec(g, store);
    const FeatureMap x = random_features(4, 2, 2, 5), mu = random_features(4, 2, 2, 6);
    const FeatureMap out = rec.predict({x, mu, 3, Plane::XY, 2, Domain::Wavelet});
    EXPECT_EQ(store->size(), 1u);
    EXPECT_EQ(store->get(3, Plane::XY, 2), out);
}

TEST(GaussianProvider, NegativeVarianceRejected) {
    const NoiseSchedule s = build_schedule(10, kDefaultLambda);
    EXPECT_THROW(GaussianProvider(Volume({2, 2, 2}), -0.1, s), ParameterError);
}

TEST(GaussianProvider, DeltaPriorGivesExactForwardNoise) {
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    const Volume m = random_volume({8, 8, 4}, 2);
    const Volume mu_vol = random_volume({8, 8, 4}, 3);
    const GaussianProvider g(m, 0.0, s);
    Rng rng(4);
    for (int t : {1, 37, 100}) {
        for (Domain d : {Domain::Wavelet, Domain::Image}) {
            const FeatureMap x0 = to_domain(slice(m, Plane::XY, 1).pixels, d);
            const FeatureMap mu = to_domain(slice(mu_vol, Plane::XY, 1).pixels, d);
            const auto f = forward_marginal(x0.values(), mu.values(), t, s, rng);
            FeatureMap xt(x0.channels(), x0.height(), x0.width());
            std::copy(f.x_t.begin(), f.x_t.end(), xt.values().begin());
            const FeatureMap eps = g.predict({xt, mu, t, Plane::XY, 1, d});
            for (std::size_t i = 0; i < eps.size(); ++i) EXPECT_NEAR(eps.values()[i], f.eps[i], 1e-9);
            const auto est = estimate_x0(xt.values(), mu.values(), eps.values(), t, s, std::nullopt);
            for (std::size_t i = 0; i < est.size(); ++i) EXPECT_NEAR(est[i], x0.values()[i], 1e-6);
        }
    }
}

TEST(GaussianProvider, ZeroAtMarginalMean) {
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    const Volume m({2, 2, 2}, 0.3f);
    const GaussianProvider g(m, 0.01, s);
    const double mv = static_cast<double>(0.3f);
    for (int t : {1, 50, 100}) {
        const FeatureMap mu(1, 2, 2, 0.7);
        const FeatureMap xt(1, 2, 2, gaussian_marginal_mean(mv, 0.7, t, s));
        const FeatureMap e = g.predict({xt, mu, t, Plane::XY, 0, Domain::Image});
        for (double x : e.values()) EXPECT_NEAR(x, 0.0, 1e-14);
    }
}

TEST(GaussianProvider, ScoreMatchesLogDensityDifferences) {
    const int T = 100;
    const NoiseSchedule s = build_schedule(T, kDefaultLambda);
    const double mu = 0.7, s2 = 0.01;
    const Volume mvol({2, 2, 2}, 0.3f);
    const double m = static_cast<double>(0.3f);
    const GaussianProvider g(mvol, s2, s);
    for (int t : {1, T / 4, T / 2, T}) {
        for (double x : {-0.2, 0.1, 0.45, 0.7, 1.2}) {
            const double h = 1e-5;
            const double fd = (log_marginal(x + h, m, mu, s2, t, s) - log_marginal(x - h, m, mu, s2, t, s)) / (2 * h);
            const double score = gaussian_score(x, m, mu, s2, t, s);
            EXPECT_NEAR(score, fd, 1e-5 * std::max(1.0, std::abs(fd))) << "t=" << t << " x=" << x;
            const FeatureMap xt(1, 2, 2, x), muf(1, 2, 2, mu);
            const double eps = g.predict({xt, muf, t, Plane::XY, 0, Domain::Image}).values()[0];
            EXPECT_NEAR(eps, -std::sqrt(s.v[t]) * fd, 1e-5 * std::max(1.0, std::abs(eps)));
        }
    }
}

TEST(GaussianProvider, StepAndShapeErrors) {
    const NoiseSchedule s = build_schedule(10, kDefaultLambda);
    const GaussianProvider g(Volume({4, 4, 4}), 0.0, s);
    const FeatureMap x(4, 2, 2), bad(4, 1, 1);
    EXPECT_THROW(g.predict({x, x, 0, Plane::XY, 0, Domain::Wavelet}), StepError);
    EXPECT_THROW(g.predict({bad, bad, 1, Plane::XY, 0, Domain::Wavelet}), DimensionError);
    EXPECT_THROW(g.predict({x, bad, 1, Plane::XY, 0, Domain::Wavelet}), DimensionError);
}

TEST(NetworkProvider, ForwardsToNetwork) {
    const NoiseSchedule s = build_schedule(10, kDefaultLambda);
    DenoiserConfig cfg;
    cfg.features = 4;
    cfg.depth = 1;
    DenoiserNet net(cfg, Plane::XY);
    net.init(1);
    const NetworkProvider p(net, s);
    const FeatureMap x = random_features(4, 8, 8, 1), mu = random_features(4, 8, 8, 2);
    EXPECT_EQ(p.predict({x, mu, 5, Plane::XY, 0, Domain::Wavelet}), net.predict(x, mu, 5, s));
}
