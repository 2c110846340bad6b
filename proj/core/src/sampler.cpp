#include "p3d/sampler.hpp"

#include <cmath>
#include <string>

#include "parallel.hpp"

namespace p3d {

void SamplerConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0 || std::abs(alpha + beta - 1.0) > 1e-12) {
        throw ConfigError("plane weights must lie in [0, 1] and sum to 1 (alpha " + std::to_string(alpha) +
                          ", beta " + std::to_string(beta) + ")");
    }
}

Plane choose_plane(int t, const SamplerConfig& cfg, Rng& rng) {
    if (cfg.alternation == Alternation::DeterministicMod2) return t % 2 == 0 ? Plane::XY : Plane::XZ;
    const double p_xy = cfg.alpha / (cfg.alpha + cfg.beta);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < p_xy ? Plane::XY : Plane::XZ;
}

Plane choose_plane(int t, const SamplerConfig& cfg) {
    Rng rng = substream(cfg.seed, {key(Stream::PlaneChoice), static_cast<std::uint64_t>(t)});
    return choose_plane(t, cfg, rng);
}

namespace {

Volume run_chain(const Volume& vT, const PlaneProviders& providers, const NoiseSchedule& sched,
                 const SamplerConfig& cfg, bool xy_only) {
    cfg.validate();
    const std::size_t need = cfg.domain == Domain::Wavelet ? 2 : 1;
    for (Plane p : {Plane::XY, Plane::XZ}) {
        auto [na, nb] = slice_shape(vT.dims(), p);
        if (na % need || nb % need) throw ConfigError("slice shape not divisible by the transform stride");
    }

    Volume W = vT;
    {
        Rng rng = substream(cfg.seed, {key(Stream::Terminal)});
        std::normal_distribution<double> n(0.0, 1.0);
        const double sd = std::sqrt(sched.v[sched.T]);
        for (float& v : W.values()) v = static_cast<float>(v + sd * n(rng));
    }

    for (int t = sched.T; t >= 1; --t) {
        const auto start = std::chrono::steady_clock::now();
        const Plane plane = xy_only ? Plane::XY : choose_plane(t, cfg);
        const NoiseProvider* provider = plane == Plane::XY ? providers.xy : providers.xz;
        if (!provider) throw ConfigError("no noise provider for plane " + std::string(to_string(plane)));
        const long count = static_cast<long>(W.slice_count(plane));

        // Slices of one plane are disjoint, so each thread reads and writes
        // only its own section of W.
        detail::parallel_for(count, [&](long i) {
            const auto idx = static_cast<std::size_t>(i);
            const FeatureMap x = to_domain(slice(W, plane, idx).pixels, cfg.domain);
            const FeatureMap mu = to_domain(slice(vT, plane, idx).pixels, cfg.domain);
            const FeatureMap eps_hat = provider->predict(NoiseQuery{x, mu, t, plane, idx, cfg.domain});
            if (!eps_hat.same_shape(x)) {
                throw DimensionError("provider returned a noise field of the wrong shape at step " + std::to_string(t));
            }
            const bool clamp_here = cfg.domain == Domain::Image && cfg.x0_clamp;
            auto x0_hat = estimate_x0(x.values(), mu.values(), eps_hat.values(), t, sched,
                                      clamp_here ? cfg.x0_clamp : std::nullopt);
            if (cfg.domain == Domain::Wavelet && cfg.x0_clamp) {
                FeatureMap est(x.channels(), x.height(), x.width());
                std::copy(x0_hat.begin(), x0_hat.end(), est.values().begin());
                Image img = from_domain(est, cfg.domain);
                for (double& v : img.values()) v = std::clamp(v, cfg.x0_clamp->lo, cfg.x0_clamp->hi);
                FeatureMap back = to_domain(img, cfg.domain);
                std::copy(back.values().begin(), back.values().end(), x0_hat.begin());
            }
            Rng rng = substream(cfg.seed, {key(Stream::Posterior), static_cast<std::uint64_t>(t),
                                           static_cast<std::uint64_t>(plane), idx});
            auto prev = posterior_step(x.values(), x0_hat, mu.values(), t, sched, rng);
            FeatureMap next(x.channels(), x.height(), x.width());
            std::copy(prev.begin(), prev.end(), next.values().begin());
            put_slice(W, Slice{plane, idx, from_domain(next, cfg.domain)});
        });

        for (float v : W.values()) {
            if (!std::isfinite(v)) throw NumericError("non-finite value in working volume at step " + std::to_string(t));
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (cfg.progress) cfg.progress(StepInfo{t, plane, secs});
        if (cfg.dump_every > 0 && (sched.T - t + 1) % cfg.dump_every == 0) {
            save_volume(W, cfg.dump_dir / ("step_" + std::to_string(t - 1) + ".vol"));
        }
    }
    clamp(W, static_cast<float>(cfg.output_clamp.lo), static_cast<float>(cfg.output_clamp.hi));
    return W;
}

}  // namespace

Volume restore(const Volume& vT, const PlaneProviders& providers, const NoiseSchedule& sched,
               const SamplerConfig& cfg) {
    return run_chain(vT, providers, sched, cfg, false);
}

Volume restore_2d_baseline(const Volume& vT, const NoiseProvider& provider_xy, const NoiseSchedule& sched,
                           const SamplerConfig& cfg) {
    return run_chain(vT, PlaneProviders{&provider_xy, nullptr}, sched, cfg, true);
}

std::shared_ptr<NoiseStore> record_oracle_noise(const Volume& v0, const Volume& vT, const NoiseSchedule& sched,
                                                const SamplerConfig& cfg, bool xy_only) {
    if (v0.dims() != vT.dims()) throw DimensionError("clean and corrupted volumes differ in shape");
    auto store = std::make_shared<NoiseStore>();
    GaussianProvider exact(v0, 0.0, sched);
    RecordingProvider rec(exact, store);
    SamplerConfig quiet = cfg;
    quiet.progress = nullptr;
    quiet.dump_every = 0;
    run_chain(vT, PlaneProviders{&rec, &rec}, sched, quiet, xy_only);
    return store;
}

}  // namespace p3d
