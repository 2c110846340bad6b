#include "p3d/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"

namespace p3d {

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw WeightError("Adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
        params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

double reverse_step_loss(std::span<const double> x_t, std::span<const double> x0, std::span<const double> mu,
                         std::span<const double> eps_hat, int t, const NoiseSchedule& sched, LossNorm norm,
                         std::span<double> grad_eps) {
    const auto x0_hat = estimate_x0(x_t, mu, eps_hat, t, sched, std::nullopt);
    const auto reversed = posterior_mean(x_t, x0_hat, mu, t, sched);
    const auto target = optimal_reverse(x_t, x0, mu, t, sched);
    const double d_mean = posterior_mean_noise_gradient(t, sched);
    const double n = static_cast<double>(x_t.size());
    if (!grad_eps.empty() && grad_eps.size() != x_t.size()) throw DimensionError("gradient buffer size mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < reversed.size(); ++i) {
        const double r = reversed[i] - target[i];
        double g;
        if (norm == LossNorm::L1) {
            loss += std::abs(r);
            g = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        } else {
            loss += r * r;
            g = 2.0 * r;
        }
        if (!grad_eps.empty()) grad_eps[i] = g * d_mean / n;
    }
    return loss / n;
}

double batch_loss(const DenoiserNet& net, std::span<const LossItem> items, const NoiseSchedule& sched,
                  LossNorm norm, std::span<double> grads) {
    if (items.empty()) return 0.0;
    const bool want_grad = !grads.empty();
    const double scale = 1.0 / static_cast<double>(items.size());
    std::vector<double> losses(items.size());
    std::vector<std::vector<double>> per_item(want_grad ? items.size() : 0);

    detail::parallel_for(static_cast<long>(items.size()), [&](long b) {
        const LossItem& it = items[b];
        const TrainingSample& s = *it.sample;
        FeatureMap x_t(s.x0.channels(), s.x0.height(), s.x0.width());
        auto xt = forward_state(s.x0.values(), s.mu.values(), it.eps, it.t, sched);
        std::copy(xt.begin(), xt.end(), x_t.values().begin());

        DenoiserNet::Tape tape;
        FeatureMap eps_hat = net.forward(net.network_input(x_t, s.mu, it.t, sched), want_grad ? &tape : nullptr);
        net.finish_prediction(eps_hat, x_t, s.mu, it.t, sched);
        const double out_scale = preconditioning(net.config(), it.t, sched).out;
        FeatureMap g_eps(eps_hat.channels(), eps_hat.height(), eps_hat.width());
        losses[b] = reverse_step_loss(x_t.values(), s.x0.values(), s.mu.values(), eps_hat.values(), it.t, sched, norm,
                                      want_grad ? g_eps.values() : std::span<double>{});
        if (want_grad) {
            for (double& g : g_eps.values()) g *= scale * out_scale;
            per_item[b].assign(grads.size(), 0.0);
            net.backward(tape, g_eps, per_item[b]);
        }
    });

    double total = 0.0;
    for (std::size_t b = 0; b < items.size(); ++b) {
        total += losses[b];
        if (want_grad)
            for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += per_item[b][i];
    }
    return total * scale;
}

std::vector<LossItem> draw_batch(std::span<const TrainingSample> samples, std::size_t batch,
                                 const NoiseSchedule& sched, Rng& rng) {
    if (samples.empty()) throw DatasetError("no training samples");
    std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
    std::uniform_int_distribution<int> step(1, sched.T);
    std::vector<LossItem> items(batch);
    for (auto& it : items) {
        it.sample = &samples[pick(rng)];
        it.t = step(rng);
        it.eps = standard_normal(rng, it.sample->x0.size());
    }
    return items;
}

std::vector<TrainingSample> make_training_samples(std::span<const VolumePair> data, Plane plane, Domain domain,
                                                  std::size_t stride) {
    if (data.empty()) throw DatasetError("training set is empty");
    std::vector<TrainingSample> out;
    for (std::size_t p = 0; p < data.size(); ++p) {
        const auto& pair = data[p];
        if (pair.clean.dims() != pair.corrupt.dims()) {
            throw DatasetError("pair " + std::to_string(p) + ": clean and corrupted volumes differ in shape");
        }
        auto [na, nb] = slice_shape(pair.clean.dims(), plane);
        const std::size_t need = (domain == Domain::Wavelet ? 2 : 1) * stride;
        if (na % need != 0 || nb % need != 0) {
            throw DatasetError("pair " + std::to_string(p) + ": slice shape (" + std::to_string(na) + ", " +
                               std::to_string(nb) + ") not divisible by " + std::to_string(need));
        }
        for (std::size_t i = 0; i < pair.clean.slice_count(plane); ++i) {
            out.push_back({to_domain(slice(pair.clean, plane, i).pixels, domain),
                           to_domain(slice(pair.corrupt, plane, i).pixels, domain)});
        }
    }
    return out;
}

TrainResult train(DenoiserNet& net, std::span<const TrainingSample> samples, const NoiseSchedule& sched,
                  const TrainOptions& opts) {
    if (samples.empty()) throw DatasetError("no training samples");
    for (const auto& s : samples) {
        if (!s.x0.same_shape(s.mu)) throw DatasetError("training sample with mismatched clean/corrupt shapes");
        if (s.x0.channels() != net.config().state_channels) {
            throw DatasetError("training sample has " + std::to_string(s.x0.channels()) +
                               " channels, network expects " + std::to_string(net.config().state_channels));
        }
    }
    Adam adam(net.param_count(), opts.beta1, opts.beta2, opts.adam_eps);
    std::vector<double> grads(net.param_count());
    TrainResult result;
    double window_sum = 0.0;
    for (int step = 1; step <= opts.steps; ++step) {
        Rng rng = substream(opts.seed, {key(Stream::Training), static_cast<std::uint64_t>(net.plane()),
                                        static_cast<std::uint64_t>(step)});
        auto items = draw_batch(samples, opts.batch, sched, rng);
        std::fill(grads.begin(), grads.end(), 0.0);
        const double loss = batch_loss(net, items, sched, opts.norm, grads);
        if (!std::isfinite(loss)) throw NumericError("training loss became non-finite at step " + std::to_string(step));
        double lr = opts.lr;
        if (opts.lr_halve_every > 0) lr *= std::pow(0.5, (step - 1) / opts.lr_halve_every);
        adam.step(net.params(), grads, lr);

        result.loss.push_back(loss);
        window_sum += loss;
        if (result.loss.size() > TrainResult::smoothing_window) {
            window_sum -= result.loss[result.loss.size() - 1 - TrainResult::smoothing_window];
        }
        const auto n = std::min(result.loss.size(), TrainResult::smoothing_window);
        result.smoothed_loss.push_back(window_sum / static_cast<double>(n));
        if (opts.progress) opts.progress(step, loss);
    }
    return result;
}

TrainResult train(DenoiserNet& net, std::span<const VolumePair> data, const NoiseSchedule& sched,
                  const TrainOptions& opts) {
    const Domain domain = net.config().state_channels == 4 ? Domain::Wavelet : Domain::Image;
    auto samples = make_training_samples(data, net.plane(), domain, net.config().stride());
    return train(net, samples, sched, opts);
}

GradCheckReport grad_check(DenoiserNet& net, std::span<const LossItem> items, const NoiseSchedule& sched,
                           LossNorm norm, double tolerance, std::size_t count, double h, std::uint64_t seed) {
    std::vector<double> analytic(net.param_count(), 0.0);
    batch_loss(net, items, sched, norm, analytic);

    Rng rng = substream(seed, {key(Stream::Init), 0xC4ECull});
    std::vector<std::size_t> idx(net.param_count());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(count, idx.size()));

    GradCheckReport rep;
    auto params = net.params();
    for (std::size_t i : idx) {
        const double w0 = params[i];
        params[i] = w0 + h;
        const double lp = batch_loss(net, items, sched, norm);
        params[i] = w0 - h;
        const double lm = batch_loss(net, items, sched, norm);
        params[i] = w0;
        const double numeric = (lp - lm) / (2.0 * h);
        const double abs_err = std::abs(numeric - analytic[i]);
        // Relative to the gradient scale; a floor keeps vanishing gradients
        // from turning round-off into large ratios.
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
        rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
        rep.max_rel_error = std::max(rep.max_rel_error, abs_err / denom);
        ++rep.checked;
    }
    rep.passed = rep.max_rel_error <= tolerance;
    return rep;
}

}  // namespace p3d
