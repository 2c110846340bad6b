#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p3d/rng.hpp"

namespace p3d {

/// Discrete tables for a mean-reverting SDE dx = theta_t (mu - x) dt + sigma_t dw
/// with sigma_t^2 = 2 lambda^2 theta_t, so the terminal law is N(mu, lambda^2).
/// Index t runs 0..T; theta[0] is unused and zero.
struct NoiseSchedule {
    int T = 0;
    double lambda = 0.0;
    std::vector<double> theta;      ///< per-step rate; unit steps so theta'_t == theta_t
    std::vector<double> theta_bar;  ///< prefix sums, theta_bar[0] = 0
    std::vector<double> v;          ///< marginal variance lambda^2 (1 - exp(-2 theta_bar))

    /// Builds the tables from per-step rates theta_1..theta_T.
    static NoiseSchedule from_theta(std::vector<double> rates, double lambda);

    double theta_prime(int t) const { return theta.at(static_cast<std::size_t>(t)); }

    /// Unit-lambda posterior variance; the sampled variance is lambda^2 times this.
    double posterior_variance(int t) const;

    /// Posterior mean = state_coeff * (x_t - mu) + x0_coeff * (x0 - mu) + mu.
    double state_coeff(int t) const;
    double x0_coeff(int t) const;

    /// JSON audit record with T, lambda and the theta_bar table.
    std::string to_json() const;
};

enum class ScheduleKind { Cosine };

/// Cosine schedule: exp(-2 theta_bar_t) = eps_T + (1 - eps_T) f(t) with f the
/// squared-cosine curve falling from 1 at t = 0 to 0 at t = T, eps_T = 5e-5.
NoiseSchedule build_schedule(int T, double lambda, ScheduleKind kind = ScheduleKind::Cosine);

/// lambda for a 0-255 "sigma_max" setting expressed in normalized intensity.
inline constexpr double kDefaultLambda = 50.0 / 255.0;

struct ClampRange {
    double lo = -0.1;
    double hi = 1.1;
};

struct ForwardSample {
    std::vector<double> x_t;
    std::vector<double> eps;
};

/// x_t = mu + (x0 - mu) e^{-theta_bar_t} + sqrt(v_t) eps, eps ~ N(0, I).
ForwardSample forward_marginal(std::span<const double> x0, std::span<const double> mu, int t,
                               const NoiseSchedule& sched, Rng& rng);

/// Same marginal with a caller-supplied noise draw.
std::vector<double> forward_state(std::span<const double> x0, std::span<const double> mu,
                                  std::span<const double> eps, int t, const NoiseSchedule& sched);

std::vector<double> posterior_mean(std::span<const double> x_t, std::span<const double> x0_hat,
                                   std::span<const double> mu, int t, const NoiseSchedule& sched);

/// Draws x_{t-1} from the closed-form Gaussian posterior given an x0 estimate.
std::vector<double> posterior_step(std::span<const double> x_t, std::span<const double> x0_hat,
                                   std::span<const double> mu, int t, const NoiseSchedule& sched, Rng& rng);

/// Inverts the forward marginal for a predicted noise field:
/// x0_hat = e^{theta_bar_t} (x_t - mu - sqrt(v_t) eps_hat) + mu, optionally clamped.
std::vector<double> estimate_x0(std::span<const double> x_t, std::span<const double> mu,
                                std::span<const double> eps_hat, int t, const NoiseSchedule& sched,
                                std::optional<ClampRange> clamp = ClampRange{});

/// Deterministic reverse target given the true x0 (the training target).
std::vector<double> optimal_reverse(std::span<const double> x_t, std::span<const double> x0,
                                    std::span<const double> mu, int t, const NoiseSchedule& sched);

/// d posterior_mean / d eps_hat through the (unclamped) x0 estimate; a scalar
/// because the map is element-wise.
double posterior_mean_noise_gradient(int t, const NoiseSchedule& sched);

}  // namespace p3d
