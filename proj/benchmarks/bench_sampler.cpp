#include <benchmark/benchmark.h>

#include <random>

#include "p3d/denoiser.hpp"
#include "p3d/phantom.hpp"
#include "p3d/provider.hpp"
#include "p3d/sampler.hpp"
#include "p3d/train.hpp"
#include "p3d/wavelet.hpp"

using namespace p3d;

namespace {

Image noise_image(std::size_t n) {
    Image img(n, n);
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.values()) v = u(rng);
    return img;
}

void BM_Dwt2RoundTrip(benchmark::State& state) {
    const Image img = noise_image(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(idwt2(dwt2(img)));
    state.SetItemsProcessed(state.iterations() * img.size());
}
BENCHMARK(BM_Dwt2RoundTrip)->Arg(64)->Arg(128)->Arg(240);

// One reverse step over two 240x240 XY slices.
void sampler_step(benchmark::State& state, Domain domain) {
    const NoiseSchedule s = NoiseSchedule::from_theta({0.8}, kDefaultLambda);
    const Volume vT = ellipsoid_phantom({240, 240, 2}, 3);
    DenoiserConfig cfg;
    cfg.features = static_cast<std::size_t>(state.range(0));
    cfg.state_channels = domain == Domain::Wavelet ? 4 : 1;
    DenoiserNet net(cfg, Plane::XY);
    net.init(4);
    const NetworkProvider p(net, s);
    SamplerConfig c;
    c.domain = domain;
    c.alternation = Alternation::Probabilistic;
    c.alpha = 1.0;
    c.beta = 0.0;
    for (auto _ : state) benchmark::DoNotOptimize(restore(vT, {&p, &p}, s, c));
}
void BM_SamplerStepWavelet(benchmark::State& state) { sampler_step(state, Domain::Wavelet); }
void BM_SamplerStepImage(benchmark::State& state) { sampler_step(state, Domain::Image); }
BENCHMARK(BM_SamplerStepWavelet)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SamplerStepImage)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const NoiseSchedule s = build_schedule(100, kDefaultLambda);
    const Volume v = ellipsoid_phantom({32, 32, 32}, 5);
    const std::vector<VolumePair> data{{v, v}};
    const auto samples = make_training_samples(data, Plane::XY, Domain::Wavelet);
    DenoiserConfig cfg;
    cfg.features = static_cast<std::size_t>(state.range(0));
    DenoiserNet net(cfg, Plane::XY);
    net.init(6);
    std::vector<double> grads(net.param_count());
    Rng rng(7);
    for (auto _ : state) {
        const auto items = draw_batch(samples, 8, s, rng);
        benchmark::DoNotOptimize(batch_loss(net, items, s, LossNorm::L1, grads));
    }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
