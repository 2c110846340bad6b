#include "p3d/mr_sde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "p3d/error.hpp"

namespace p3d {

namespace {

// 1 - e^{-2a}, accurate for small a.
double one_minus_exp2(double a) { return -std::expm1(-2.0 * a); }

void check_t(const NoiseSchedule& s, int t, int lo) {
    if (t < lo || t > s.T) {
        throw StepError("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(s.T) +
                        "]");
    }
}

void check_same(std::size_t a, std::size_t b) {
    if (a != b) throw DimensionError("field sizes differ: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

NoiseSchedule NoiseSchedule::from_theta(std::vector<double> rates, double lambda) {
    if (rates.empty()) throw ParameterError("schedule needs at least one step");
    if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
    NoiseSchedule s;
    s.T = static_cast<int>(rates.size());
    s.lambda = lambda;
    s.theta.assign(rates.size() + 1, 0.0);
    s.theta_bar.assign(rates.size() + 1, 0.0);
    s.v.assign(rates.size() + 1, 0.0);
    for (std::size_t t = 1; t <= rates.size(); ++t) {
        if (!(rates[t - 1] > 0.0) || !std::isfinite(rates[t - 1])) {
            throw ParameterError("theta_" + std::to_string(t) + " must be positive and finite");
        }
        s.theta[t] = rates[t - 1];
        s.theta_bar[t] = s.theta_bar[t - 1] + rates[t - 1];
        s.v[t] = lambda * lambda * one_minus_exp2(s.theta_bar[t]);
    }
    return s;
}

double NoiseSchedule::posterior_variance(int t) const {
    check_t(*this, t, 1);
    const double tb = theta_bar[t], tbp = theta_bar[t - 1], tp = theta[t];
    return one_minus_exp2(tbp) * one_minus_exp2(tp) / one_minus_exp2(tb);
}

double NoiseSchedule::state_coeff(int t) const {
    check_t(*this, t, 1);
    return one_minus_exp2(theta_bar[t - 1]) / one_minus_exp2(theta_bar[t]) * std::exp(-theta[t]);
}

double NoiseSchedule::x0_coeff(int t) const {
    check_t(*this, t, 1);
    return one_minus_exp2(theta[t]) / one_minus_exp2(theta_bar[t]) * std::exp(-theta_bar[t - 1]);
}

std::string NoiseSchedule::to_json() const {
    nlohmann::json j;
    j["T"] = T;
    j["lambda"] = lambda;
    j["theta_bar"] = theta_bar;
    return j.dump();
}

NoiseSchedule build_schedule(int T, double lambda, ScheduleKind kind) {
    if (T < 2) throw ParameterError("schedule needs T >= 2, got " + std::to_string(T));
    if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
    (void)kind;

    constexpr double s = 0.008;
    constexpr double eps_T = 5e-5;
    auto f = [&](double t) {
        const double c0 = std::cos(s / (1.0 + s) * std::numbers::pi / 2.0);
        const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
        return std::max(0.0, c * c / (c0 * c0));
    };
    // decay(t) = e^{-2 theta_bar_t}
    std::vector<double> theta_bar(static_cast<std::size_t>(T) + 1);
    for (int t = 0; t <= T; ++t) {
        const double decay = eps_T + (1.0 - eps_T) * f(t);
        theta_bar[t] = -0.5 * std::log(decay);
    }
    theta_bar[0] = 0.0;
    std::vector<double> rates(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) rates[t - 1] = theta_bar[t] - theta_bar[t - 1];
    return NoiseSchedule::from_theta(std::move(rates), lambda);
}

std::vector<double> forward_state(std::span<const double> x0, std::span<const double> mu,
                                  std::span<const double> eps, int t, const NoiseSchedule& sched) {
    check_t(sched, t, 0);
    check_same(x0.size(), mu.size());
    check_same(x0.size(), eps.size());
    const double decay = std::exp(-sched.theta_bar[t]);
    const double sd = std::sqrt(sched.v[t]);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = mu[i] + (x0[i] - mu[i]) * decay + sd * eps[i];
    return out;
}

ForwardSample forward_marginal(std::span<const double> x0, std::span<const double> mu, int t,
                               const NoiseSchedule& sched, Rng& rng) {
    check_t(sched, t, 0);
    check_same(x0.size(), mu.size());
    ForwardSample out;
    out.eps = standard_normal(rng, x0.size());
    if (t == 0) {
        out.x_t.assign(x0.begin(), x0.end());
    } else {
        out.x_t = forward_state(x0, mu, out.eps, t, sched);
    }
    return out;
}

std::vector<double> posterior_mean(std::span<const double> x_t, std::span<const double> x0_hat,
                                   std::span<const double> mu, int t, const NoiseSchedule& sched) {
    check_t(sched, t, 1);
    check_same(x_t.size(), x0_hat.size());
    check_same(x_t.size(), mu.size());
    const double a = sched.state_coeff(t);
    const double b = sched.x0_coeff(t);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = a * (x_t[i] - mu[i]) + b * (x0_hat[i] - mu[i]) + mu[i];
    return out;
}

std::vector<double> posterior_step(std::span<const double> x_t, std::span<const double> x0_hat,
                                   std::span<const double> mu, int t, const NoiseSchedule& sched, Rng& rng) {
    auto out = posterior_mean(x_t, x0_hat, mu, t, sched);
    const double var = sched.lambda * sched.lambda * sched.posterior_variance(t);
    if (var > 0.0) {
        const double sd = std::sqrt(var);
        std::normal_distribution<double> n(0.0, 1.0);
        for (double& v : out) v += sd * n(rng);
    }
    return out;
}

std::vector<double> estimate_x0(std::span<const double> x_t, std::span<const double> mu,
                                std::span<const double> eps_hat, int t, const NoiseSchedule& sched,
                                std::optional<ClampRange> clamp) {
    check_t(sched, t, 1);
    check_same(x_t.size(), mu.size());
    check_same(x_t.size(), eps_hat.size());
    const double grow = std::exp(sched.theta_bar[t]);
    const double sd = std::sqrt(sched.v[t]);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        double v = grow * (x_t[i] - mu[i] - sd * eps_hat[i]) + mu[i];
        if (clamp) v = std::clamp(v, clamp->lo, clamp->hi);
        out[i] = v;
    }
    return out;
}

std::vector<double> optimal_reverse(std::span<const double> x_t, std::span<const double> x0,
                                    std::span<const double> mu, int t, const NoiseSchedule& sched) {
    return posterior_mean(x_t, x0, mu, t, sched);
}

double posterior_mean_noise_gradient(int t, const NoiseSchedule& sched) {
    check_t(sched, t, 1);
    return -sched.x0_coeff(t) * std::exp(sched.theta_bar[t]) * std::sqrt(sched.v[t]);
}

}  // namespace p3d
