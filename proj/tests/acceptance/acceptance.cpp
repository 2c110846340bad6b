// Acceptance harness. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion names as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "p3d/denoiser.hpp"
#include "p3d/metrics.hpp"
#include "p3d/motion.hpp"
#include "p3d/mr_sde.hpp"
#include "p3d/phantom.hpp"
#include "p3d/provider.hpp"
#include "p3d/sampler.hpp"
#include "p3d/train.hpp"
#include "p3d/wavelet.hpp"

using namespace p3d;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_abs_diff(const Volume& a, const Volume& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.values()[i]) - b.values()[i]));
    return m;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Kolmogorov-Smirnov statistic against N(0, sd^2).
double ks_statistic(std::vector<double> x, double sd) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = normal_cdf(x[i] / sd);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

// ---------------------------------------------------------------------------

Outcome wavelet_roundtrip() {
    const auto t0 = Clock::now();
    Rng rng(101);
    std::uniform_int_distribution<int> half(4, 64);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_rec = 0.0, worst_energy = 0.0;
    bool ok = true;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t nx = 2 * half(rng), ny = 2 * half(rng);
        Image x(nx, ny);
        for (double& v : x.values()) v = u(rng);
        const SubbandImage sb = dwt2(x);
        const Image back = idwt2(sb);
        double rec = 0.0, ex = 0.0, es = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            rec = std::max(rec, std::abs(back.values()[i] - x.values()[i]));
            ex += x.values()[i] * x.values()[i];
        }
        for (const Image* b : {&sb.ll, &sb.lh, &sb.hl, &sb.hh})
            for (double v : b->values()) es += v * v;
        worst_rec = std::max(worst_rec, rec);
        worst_energy = std::max(worst_energy, std::abs(es - ex) / ex);
        ok = ok && rec <= 1e-6 && std::abs(es - ex) <= 1e-6 * ex;
    }
    const double secs = since(t0);
    return {ok && secs < 10.0,
            fmt("1000 images, max reconstruction err %.2e, max relative energy err %.2e, %.2fs", worst_rec,
                worst_energy, secs)};
}

Outcome terminal_law() {
    const auto t0 = Clock::now();
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    const std::size_t n = 100000;
    Rng rng(202);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x0(n), mu(n);
    for (std::size_t i = 0; i < n; ++i) {
        x0[i] = u(rng);
        mu[i] = u(rng);
    }
    const ForwardSample f = forward_marginal(x0, mu, s.T, s, rng);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = f.x_t[i] - mu[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= n - 1;
    const double lam = s.lambda, ks = ks_statistic(d, lam), crit = 1.628 / std::sqrt(static_cast<double>(n));
    const double secs = since(t0);
    const bool ok = std::abs(mean) <= 0.01 * lam && std::abs(var / (lam * lam) - 1.0) <= 0.01 && ks < crit &&
                    secs < 30.0;
    return {ok, fmt("mean %.2e (tol %.2e), var/lambda^2 %.4f, KS %.5f (crit %.5f), %.2fs", mean, 0.01 * lam,
                    var / (lam * lam), ks, crit, secs)};
}

Outcome posterior_consistency() {
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    const std::size_t n = 100000;
    const double x0v = 0.8, muv = 0.3;
    const std::vector<double> x0(n, x0v), mu(n, muv);
    bool ok = true;
    std::string detail;
    for (int t : {2, s.T / 2, s.T}) {
        Rng rng(300 + t);
        const ForwardSample f = forward_marginal(x0, mu, t, s, rng);
        const std::vector<double> prev = posterior_step(f.x_t, x0, mu, t, s, rng);
        // Independent marginal at t-1.
        const double want_mean = muv + std::exp(-s.theta_bar[t - 1]) * (x0v - muv);
        const double want_var = s.lambda * s.lambda * (1.0 - std::exp(-2.0 * s.theta_bar[t - 1]));
        const double mean = std::accumulate(prev.begin(), prev.end(), 0.0) / n;
        double var = 0.0;
        for (double v : prev) var += (v - mean) * (v - mean);
        var /= n - 1;
        const double em = std::abs(mean / want_mean - 1.0), ev = std::abs(var / want_var - 1.0);
        ok = ok && em <= 0.02 && ev <= 0.02;
        detail += fmt("t=%d mean err %.2e var err %.2e; ", t, em, ev);
    }
    detail.resize(detail.size() - 2);
    return {ok, detail};
}

Outcome oracle_roundtrip() {
    const auto t0 = Clock::now();
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    const Volume v0 = ellipsoid_phantom({32, 32, 32}, 404);
    const Volume vT = corrupt(v0, MotionSpec::mild(405)).first;
    bool ok = true;
    std::string detail;
    for (Alternation a : {Alternation::DeterministicMod2, Alternation::Probabilistic}) {
        SamplerConfig c;
        c.seed = 406;
        c.alternation = a;
        const auto oracle = oracle_provider(record_oracle_noise(v0, vT, s, c));
        const double err = max_abs_diff(restore(vT, {oracle.get(), oracle.get()}, s, c), v0);
        ok = ok && err <= 1e-4;
        detail += fmt("%s sup err %.2e; ", a == Alternation::DeterministicMod2 ? "mod2" : "probabilistic", err);
    }
    const double secs = since(t0);
    return {ok && secs < 120.0, detail + fmt("%.1fs", secs)};
}

Outcome analytic_score() {
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    const Dims d{16, 16, 8};
    Rng rng(505);
    std::uniform_real_distribution<float> u(0.3f, 0.7f);
    Volume m(d), mu(d);
    for (float& v : m.values()) v = u(rng);
    for (float& v : mu.values()) v = u(rng);
    const double s2 = 0.01;
    const GaussianProvider g(m, s2, s);

    // Finite-difference score of the noisy marginal, per state coefficient.
    double worst = 0.0;
    const Slice ms = slice(m, Plane::XY, 3), us = slice(mu, Plane::XY, 3);
    for (Domain dom : {Domain::Image, Domain::Wavelet}) {
        const FeatureMap mm = to_domain(ms.pixels, dom), uu = to_domain(us.pixels, dom);
        for (int t : {1, s.T / 4, s.T / 2, s.T}) {
            const double a = std::exp(-s.theta_bar[t]), var = a * a * s2 + s.v[t];
            FeatureMap xt = uu;
            std::normal_distribution<double> z(0.0, 1.0);
            for (std::size_t i = 0; i < xt.size(); ++i)
                xt.values()[i] = uu.values()[i] + a * (mm.values()[i] - uu.values()[i]) + std::sqrt(var) * z(rng);
            const FeatureMap eps = g.predict({xt, uu, t, Plane::XY, 3, dom});
            const double h = 1e-5;
            for (std::size_t i = 0; i < xt.size(); ++i) {
                const double mean = uu.values()[i] + a * (mm.values()[i] - uu.values()[i]);
                auto logp = [&](double x) { return -0.5 * (x - mean) * (x - mean) / var - 0.5 * std::log(var); };
                const double x = xt.values()[i];
                const double fd = (logp(x + h) - logp(x - h)) / (2 * h);
                const double score = -eps.values()[i] / std::sqrt(s.v[t]);
                worst = std::max(worst, std::abs(score - fd));
            }
        }
    }

    // Toy restore: per-voxel mean over 50 runs against the prior mean.
    const int runs = 50;
    std::vector<double> sum(m.size(), 0.0), sq(m.size(), 0.0);
    for (int r = 0; r < runs; ++r) {
        SamplerConfig c;
        c.seed = 5000 + r;
        const Volume out = restore(mu, {&g, &g}, s, c);
        for (std::size_t i = 0; i < out.size(); ++i) {
            sum[i] += out.values()[i];
            sq[i] += static_cast<double>(out.values()[i]) * out.values()[i];
        }
    }
    std::size_t within = 0;
    double zsum = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double mean = sum[i] / runs;
        const double sd = std::sqrt(std::max(0.0, (sq[i] - runs * mean * mean) / (runs - 1)));
        const double z = (mean - m.values()[i]) / (sd / std::sqrt(static_cast<double>(runs)));
        within += std::abs(z) <= 3.0;
        zsum += z;
    }
    const double frac = static_cast<double>(within) / m.size();
    const double zbar = zsum / m.size(), zlim = 3.0 / std::sqrt(static_cast<double>(m.size()));
    const bool ok = worst <= 1e-5 && frac >= 0.99 && std::abs(zbar) <= zlim;
    return {ok, fmt("max score err %.2e; %.2f%% voxels within 3 SE (need 99%%), mean z %.3f (tol %.3f)", worst,
                    100.0 * frac, zbar, zlim)};
}

Outcome gradient_check() {
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    DenoiserConfig c;
    c.features = 4;
    c.depth = 1;
    DenoiserNet net(c, Plane::XY);
    net.init(606);
    const Volume v = ellipsoid_phantom({16, 16, 16}, 607);
    const std::vector<VolumePair> data{{v, corrupt(v, MotionSpec::mild(608)).first}};
    const auto samples = make_training_samples(data, Plane::XY, Domain::Wavelet);
    Rng rng(609);
    const auto items = draw_batch(samples, 4, s, rng);
    bool ok = net.param_count() <= 5000;
    std::string detail = fmt("%zu weights", net.param_count());
    for (LossNorm norm : {LossNorm::L2, LossNorm::L1}) {
        const GradCheckReport r = grad_check(net, items, s, norm, 1e-3, 200, 1e-4, 610);
        ok = ok && r.passed && r.max_rel_error <= 1e-3;
        detail += fmt("; %s max rel err %.2e over %zu", norm == LossNorm::L2 ? "L2" : "L1", r.max_rel_error,
                      r.checked);
    }
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// Toy experiment shared by the end-to-end and ablation criteria.

constexpr int kToySeeds = 5;

struct Toy {
    bool ready = false;
    double train_seconds = 0.0;
    double gain_psnr[3]{}, gain_ssim[3]{};
    int z_wins = 0;
    std::vector<std::pair<double, double>> z;  // per held-out volume: 3d, 2d
};

Toy run_toy() {
    Toy toy;
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    std::vector<VolumePair> train_set, test_set;
    for (int i = 0; i < 35; ++i) {
        const Volume v = ellipsoid_phantom({32, 32, 32}, 1000 + i);
        (i < 30 ? train_set : test_set).push_back({v, corrupt(v, MotionSpec::mild(2000 + i)).first});
    }
    DenoiserConfig cfg;
    cfg.features = 16;
    DenoiserNet xy(cfg, Plane::XY), xz(cfg, Plane::XZ);
    xy.init(1);
    xz.init(2);
    TrainOptions o;
    o.steps = 18000;
    o.lr = 1e-3;
    o.lr_halve_every = o.steps / 3;
    o.seed = 5;
    const auto t0 = Clock::now();
    train(xy, train_set, s, o);
    train(xz, train_set, s, o);
    toy.train_seconds = since(t0);

    const NetworkProvider pxy(xy, s), pxz(xz, s);
    const double n = static_cast<double>(test_set.size() * kToySeeds);
    for (const VolumePair& p : test_set) {
        double z3 = 0.0, z2 = 0.0;
        for (int r = 0; r < kToySeeds; ++r) {
            SamplerConfig c;
            c.seed = 7000 + r;
            const Volume r3 = restore(p.corrupt, {&pxy, &pxz}, s, c);
            const Volume r2 = restore_2d_baseline(p.corrupt, pxy, s, c);
            z3 += z_discontinuity(r3) / kToySeeds;
            z2 += z_discontinuity(r2) / kToySeeds;
            for (int k = 0; k < 3; ++k) {
                const PlaneScores a = plane_scores(r3, p.clean, Plane(k)), b = plane_scores(p.corrupt, p.clean, Plane(k));
                toy.gain_psnr[k] += (a.psnr - b.psnr) / n;
                toy.gain_ssim[k] += (a.ssim - b.ssim) / n;
            }
        }
        toy.z.emplace_back(z3, z2);
        toy.z_wins += z3 <= z2;
    }
    toy.ready = true;
    return toy;
}

Toy& toy() {
    static Toy t = run_toy();
    return t;
}

Outcome end_to_end() {
    const Toy& t = toy();
    bool ok = t.train_seconds <= 1800.0;
    for (int k = 0; k < 3; ++k) ok = ok && t.gain_psnr[k] >= 2.0 && t.gain_ssim[k] > 0.0;
    return {ok, fmt("train %.0fs; psnr gain xy %+.2f xz %+.2f yz %+.2f dB; ssim gain xy %+.4f xz %+.4f yz %+.4f",
                    t.train_seconds, t.gain_psnr[0], t.gain_psnr[1], t.gain_psnr[2], t.gain_ssim[0], t.gain_ssim[1],
                    t.gain_ssim[2])};
}

Outcome pseudo3d_ablation() {
    const Toy& t = toy();
    std::string detail = fmt("%d/5 cases", t.z_wins);
    for (const auto& [a, b] : t.z) detail += fmt("; %.4f vs %.4f", a, b);
    return {t.z_wins >= 4, detail};
}

// ---------------------------------------------------------------------------

Outcome wavelet_speedup() {
    const int steps = 50;
    const NoiseSchedule s = build_schedule(steps, kDefaultLambda);
    const Volume vT = ellipsoid_phantom({240, 240, 4}, 909);
    double median[2];
    for (Domain dom : {Domain::Wavelet, Domain::Image}) {
        DenoiserConfig cfg;
        cfg.features = 16;
        cfg.state_channels = dom == Domain::Wavelet ? 4 : 1;
        DenoiserNet net(cfg, Plane::XY);
        net.init(910);
        const NetworkProvider p(net, s);
        SamplerConfig c;
        c.domain = dom;
        c.alternation = Alternation::Probabilistic;
        c.alpha = 1.0;
        c.beta = 0.0;
        std::vector<double> secs;
        c.progress = [&](const StepInfo& i) { secs.push_back(i.seconds); };
        restore(vT, {&p, &p}, s, c);
        std::nth_element(secs.begin(), secs.begin() + secs.size() / 2, secs.end());
        median[dom == Domain::Wavelet ? 0 : 1] = secs[secs.size() / 2];
    }
    const double ratio = median[0] / median[1];
    return {ratio <= 0.6,
            fmt("median step wavelet %.3fs image %.3fs, ratio %.3f (need <= 0.6)", median[0], median[1], ratio)};
}

Outcome motion_sanity() {
    const Volume v = ellipsoid_phantom({32, 32, 32}, 1001);
    const bool identity = corrupt(v, MotionSpec{0.0, 0.0, 3, 3.0, 3.0, 1}).first == v;

    // Integer translation on every line equals a circular shift.
    const Dims d = v.dims();
    const long sx = 3, sy = -2, sz = 1;
    MotionEvent ev{0, d[1], {{double(sx), double(sy), double(sz)}, {0.0, 0.0, 1.0}, 0.0}};
    const Volume moved = apply_motion_events(v, {ev}).first;
    double shift_err = 0.0;
    auto wrap = [](long i, std::size_t n) { return static_cast<std::size_t>((i % long(n) + long(n)) % long(n)); };
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x)
                shift_err = std::max(shift_err, std::abs(static_cast<double>(moved(wrap(long(x) + sx, d[0]),
                                                                                   wrap(long(y) + sy, d[1]),
                                                                                   wrap(long(z) + sz, d[2]))) -
                                                         v(x, y, z)));

    double mild = 0.0, severe = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        mild += psnr(corrupt(v, MotionSpec::mild(seed)).first, v) / 10.0;
        severe += psnr(corrupt(v, MotionSpec::severe(seed)).first, v) / 10.0;
    }
    const bool ok = identity && shift_err <= 1e-6 && severe < mild;
    return {ok, fmt("zero severity %s; shift err %.2e; mean psnr mild %.2f severe %.2f", identity ? "identical" : "differs",
                    shift_err, mild, severe)};
}

struct Criterion {
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"wavelet-roundtrip", wavelet_roundtrip},
        {"sde-terminal-law", terminal_law},
        {"posterior-consistency", posterior_consistency},
        {"oracle-roundtrip", oracle_roundtrip},
        {"analytic-score", analytic_score},
        {"gradient-check", gradient_check},
        {"toy-end-to-end", end_to_end},
        {"pseudo3d-ablation", pseudo3d_ablation},
        {"wavelet-speedup", wavelet_speedup},
        {"motion-sanity", motion_sanity},
    };
    std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const Criterion& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
