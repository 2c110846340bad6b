#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "p3d/denoiser.hpp"
#include "p3d/field.hpp"
#include "p3d/mr_sde.hpp"
#include "p3d/volume.hpp"

namespace p3d {

/// Where the reverse chain runs: on stacked Haar subbands at half resolution,
/// or directly on slice pixels.
enum class Domain { Wavelet, Image };

/// Image -> state tensor in `domain` (4 x H/2 x W/2 or 1 x H x W).
FeatureMap to_domain(const Image& img, Domain domain);
Image from_domain(const FeatureMap& state, Domain domain);

struct NoiseQuery {
    const FeatureMap& x_t;
    const FeatureMap& mu;
    int t;
    Plane plane;
    std::size_t slice;
    Domain domain;
};

/// Maps a noisy slice state and its condition to a predicted noise field of
/// the same shape. Implementations are deterministic and safe to call
/// concurrently.
class NoiseProvider {
public:
    virtual ~NoiseProvider() = default;
    virtual FeatureMap predict(const NoiseQuery& q) const = 0;
};

/// Noise fields keyed by (step, plane, slice).
class NoiseStore {
public:
    using Key = std::tuple<int, Plane, std::size_t>;

    void put(int t, Plane plane, std::size_t slice, FeatureMap eps);
    /// Throws LookupError when the key was never recorded.
    const FeatureMap& get(int t, Plane plane, std::size_t slice) const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::map<Key, FeatureMap> entries_;
};

/// Replays recorded noise.
class OracleProvider final : public NoiseProvider {
public:
    explicit OracleProvider(std::shared_ptr<const NoiseStore> store) : store_(std::move(store)) {}
    FeatureMap predict(const NoiseQuery& q) const override;

private:
    std::shared_ptr<const NoiseStore> store_;
};

/// Forwards to another provider and records every answer.
class RecordingProvider final : public NoiseProvider {
public:
    RecordingProvider(const NoiseProvider& inner, std::shared_ptr<NoiseStore> store)
        : inner_(inner), store_(std::move(store)) {}
    FeatureMap predict(const NoiseQuery& q) const override;

private:
    const NoiseProvider& inner_;
    std::shared_ptr<NoiseStore> store_;
};

/// Exact noise for per-voxel independent Gaussian data N(m, s2). The noisy
/// marginal at step t is N(mu + (m - mu) e^{-theta_bar}, s2 e^{-2 theta_bar} + v_t)
/// and the prediction is -sqrt(v_t) times its score. With s2 = 0 this returns
/// the exact forward noise of the delta prior at m.
class GaussianProvider final : public NoiseProvider {
public:
    GaussianProvider(Volume mean, double s2, NoiseSchedule sched);
    FeatureMap predict(const NoiseQuery& q) const override;

private:
    Volume mean_;
    double s2_;
    NoiseSchedule sched_;
};

/// Scalar helpers for the Gaussian data model.
double gaussian_marginal_mean(double m, double mu, int t, const NoiseSchedule& sched);
double gaussian_marginal_variance(double s2, int t, const NoiseSchedule& sched);
/// d/dx log N(x; marginal) at step t.
double gaussian_score(double x, double m, double mu, double s2, int t, const NoiseSchedule& sched);

/// Runs a trained network under the schedule it was trained with.
class NetworkProvider final : public NoiseProvider {
public:
    NetworkProvider(DenoiserNet net, NoiseSchedule sched);
    FeatureMap predict(const NoiseQuery& q) const override;
    const DenoiserNet& net() const noexcept { return net_; }

private:
    DenoiserNet net_;
    NoiseSchedule sched_;
};

std::unique_ptr<NoiseProvider> oracle_provider(std::shared_ptr<const NoiseStore> store);
std::unique_ptr<NoiseProvider> gaussian_provider(Volume mean, double s2, const NoiseSchedule& sched);

}  // namespace p3d
