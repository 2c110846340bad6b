#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "p3d/denoiser.hpp"
#include "p3d/mr_sde.hpp"
#include "p3d/provider.hpp"
#include "p3d/volume.hpp"

namespace p3d {

enum class LossNorm { L1, L2 };

struct VolumePair {
    Volume clean;
    Volume corrupt;
};

/// One clean/corrupted slice pair already mapped into the training domain.
struct TrainingSample {
    FeatureMap x0;
    FeatureMap mu;
};

/// A training draw: sample, step and the forward noise.
struct LossItem {
    const TrainingSample* sample = nullptr;
    int t = 1;
    std::vector<double> eps;
};

struct TrainOptions {
    int steps = 2000;
    std::size_t batch = 8;
    double lr = 1e-3;
    /// Learning rate halves every this many steps; 0 keeps it constant.
    int lr_halve_every = 0;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    LossNorm norm = LossNorm::L1;
    std::uint64_t seed = 0;
    /// Called after every step with (step, batch loss).
    std::function<void(int, double)> progress;
};

struct TrainResult {
    std::vector<double> loss;           ///< batch loss per optimization step
    std::vector<double> smoothed_loss;  ///< trailing mean over `smoothing_window` steps
    static constexpr std::size_t smoothing_window = 20;
};

/// Adam with bias correction over a flat parameter vector.
class Adam {
public:
    Adam(std::size_t n, double beta1, double beta2, double eps);
    void step(std::span<double> params, std::span<const double> grads, double lr);
    long steps_taken() const noexcept { return t_; }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

/// Reverse-step objective for one predicted noise field: the distance between
/// the posterior mean computed from eps_hat and the optimal reverse state,
/// averaged over elements. Writes dL/d eps_hat into `grad_eps` when non-empty.
double reverse_step_loss(std::span<const double> x_t, std::span<const double> x0, std::span<const double> mu,
                         std::span<const double> eps_hat, int t, const NoiseSchedule& sched, LossNorm norm,
                         std::span<double> grad_eps = {});

/// Mean loss over `items`; accumulates dL/dparams into `grads` when non-empty.
double batch_loss(const DenoiserNet& net, std::span<const LossItem> items, const NoiseSchedule& sched,
                  LossNorm norm, std::span<double> grads = {});

/// Draws a batch of (sample, t, eps) uniformly.
std::vector<LossItem> draw_batch(std::span<const TrainingSample> samples, std::size_t batch,
                                 const NoiseSchedule& sched, Rng& rng);

/// All slices of `plane` from every pair, mapped to `domain`. Throws
/// DatasetError for mismatched pairs or slices the network cannot take.
std::vector<TrainingSample> make_training_samples(std::span<const VolumePair> data, Plane plane, Domain domain,
                                                  std::size_t stride = 1);

TrainResult train(DenoiserNet& net, std::span<const TrainingSample> samples, const NoiseSchedule& sched,
                  const TrainOptions& opts);

/// Convenience: builds samples for the network's own plane and domain.
TrainResult train(DenoiserNet& net, std::span<const VolumePair> data, const NoiseSchedule& sched,
                  const TrainOptions& opts);

struct GradCheckReport {
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = false;
};

/// Compares analytic loss gradients with central differences at `count`
/// randomly chosen weights.
GradCheckReport grad_check(DenoiserNet& net, std::span<const LossItem> items, const NoiseSchedule& sched,
                           LossNorm norm, double tolerance, std::size_t count = 100, double h = 1e-4,
                           std::uint64_t seed = 0);

}  // namespace p3d
